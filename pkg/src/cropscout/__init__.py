"""Open-vocabulary crop detection and zero-shot classification toolkit.

Core modules are importable directly; the HTTP surface lives in
:mod:`cropscout.service` and the command-line client in
:mod:`cropscout.cli`.
"""

__version__ = "0.1.0"
