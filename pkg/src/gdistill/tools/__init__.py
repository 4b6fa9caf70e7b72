"""Graph analysis tool library with the dual-output contract
``(memory, params) -> (description, memory')``."""

from .base import (ALIASES, CATEGORIES, DESCRIPTION_LIMIT, Output, Param, ParamError, ToolExecutionError,
                   ToolNotFound, ToolResult, ToolSpec, get_spec, invoke, manifest, parse_manifest,
                   registry)
from . import library  # noqa: F401  (registers the tools)

__all__ = [
    "ALIASES", "CATEGORIES", "DESCRIPTION_LIMIT", "Output", "Param", "ParamError", "ToolExecutionError",
    "ToolNotFound", "ToolResult", "ToolSpec", "get_spec", "invoke", "manifest", "parse_manifest",
    "registry",
]
