"""Exception types shared across the package.

The split mirrors the CLI exit-code contract: configuration problems are
plain ``ValueError``/usage errors, model-backend failures are
``BackendError``, and file/schema problems are ``DataFormatError``.
"""


class BackendError(RuntimeError):
    """A pluggable model backend failed while serving a request."""


class DataFormatError(ValueError):
    """An input file is missing, unparseable, or violates its schema."""
