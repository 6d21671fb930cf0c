"""Lowercase alphanumeric tokenization shared by the text stubs and the toy
text encoder, so that caption tokens and prompt tokens live in one space."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Split ``text`` into lowercase alphanumeric tokens, in order."""
    return _TOKEN_RE.findall(text.lower())
