"""Class vocabularies, prompt templates, and per-class text embeddings.

Class names are rendered into short natural-language templates before
encoding; with several templates the per-template embeddings are averaged
and re-normalized (template ensembling), which degenerates to the plain
single-template encoding when only one template is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .embeddings import l2_normalize
from .errors import BackendError, DataFormatError

if TYPE_CHECKING:
    from .backends.interfaces import TextEncoder

__all__ = [
    "PLACEHOLDER",
    "DEFAULT_TEMPLATES",
    "ClassVocabulary",
    "PromptSet",
    "render_prompts",
    "class_embeddings",
    "load_prompt_set",
]

PLACEHOLDER = "{}"

DEFAULT_TEMPLATES = (
    "There is {} in the scene",
    "A clear image of {}",
    "A photo of a {}",
)


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered, open vocabulary of class names to detect or classify.

    Names are whitespace-trimmed at construction and must be unique after
    case-folding, so "Kiwi" and "kiwi " cannot coexist.
    """

    names: tuple[str, ...]

    def __init__(self, names: Iterable[str]) -> None:
        trimmed = tuple(str(n).strip() for n in names)
        if len(trimmed) == 0:
            raise ValueError("vocabulary must contain at least one class name")
        if any(not n for n in trimmed):
            raise ValueError("vocabulary contains an empty class name")
        folded = [n.casefold() for n in trimmed]
        if len(set(folded)) != len(folded):
            dupes = sorted({n for n in folded if folded.count(n) > 1})
            raise ValueError(f"vocabulary names not unique after case-folding: {dupes}")
        object.__setattr__(self, "names", trimmed)

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __getitem__(self, k: int) -> str:
        return self.names[k]


@dataclass(frozen=True)
class PromptSet:
    """Ordered prompt templates, each containing the placeholder exactly once."""

    templates: tuple[str, ...]

    def __init__(self, templates: Iterable[str]) -> None:
        templates = tuple(str(t) for t in templates)
        for t in templates:
            if t.count(PLACEHOLDER) != 1:
                raise ValueError(
                    f"template must contain {PLACEHOLDER!r} exactly once: {t!r}"
                )
        object.__setattr__(self, "templates", templates)

    @classmethod
    def default(cls) -> "PromptSet":
        return cls(DEFAULT_TEMPLATES)

    def __len__(self) -> int:
        return len(self.templates)


def render_prompts(vocab: ClassVocabulary, prompts: PromptSet) -> list[list[str]]:
    """Substitute every class name into every template, order-preserving.

    Returns one list of rendered strings per class, following vocabulary
    order; an empty template set yields K empty lists.
    """
    return [[t.replace(PLACEHOLDER, name) for t in prompts.templates] for name in vocab]


def class_embeddings(
    vocab: ClassVocabulary,
    prompts: PromptSet,
    text_encoder: "TextEncoder",
    ensemble: bool = True,
) -> np.ndarray:
    """Encode the vocabulary into K unit-norm class embeddings.

    Each rendered prompt is encoded and normalized; per class the template
    embeddings are averaged component-wise and re-normalized. With
    ``ensemble=False`` only the first template is used, making the result
    exactly the normalized single encoding.
    """
    if len(prompts) == 0:
        raise ValueError("class embeddings require at least one prompt template")
    active = prompts if ensemble else PromptSet(prompts.templates[:1])
    rows = []
    for name, rendered in zip(vocab, render_prompts(vocab, active)):
        encoded = []
        for prompt in rendered:
            try:
                raw = text_encoder.encode(prompt)
            except Exception as exc:
                raise BackendError(f"text encoder failed on prompt {prompt!r}: {exc}") from exc
            encoded.append(l2_normalize(np.asarray(raw, dtype=np.float64)))
        mean = np.mean(encoded, axis=0)
        if float(np.linalg.norm(mean)) < 1e-12:
            raise ValueError(
                f"zero-norm template ensemble for class {name!r} (embeddings cancel)"
            )
        rows.append(l2_normalize(mean))
    return np.stack(rows)


def load_prompt_set(path: str | Path) -> PromptSet:
    """Read templates from a UTF-8 text file, one per line.

    Blank lines and ``#``-prefixed comment lines are ignored.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read prompt file {path}: {exc}") from exc
    lines = [ln.strip() for ln in text.splitlines()]
    templates = [ln for ln in lines if ln and not ln.startswith("#")]
    try:
        return PromptSet(templates)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
