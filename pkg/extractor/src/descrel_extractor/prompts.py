"""Prompt template for regenerating description packs with a language model.

The shipped template asks a model to write short visually-checkable
statements about a subject-object photo from three observer viewpoints
(geometry, interaction, scene context), to negate each statement, and to
fill in the per-relation association table. Its required answer shape is
the pack-spec JSON that `packs.load_pack_spec` accepts, so the round trip
is: render prompt -> run it through any language model out of band ->
embed the answer with `embed-pack`.

This package never calls a language model itself.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ManifestError

TEMPLATE_PATH = Path(__file__).resolve().parent / "data" / "persona_prompt.md"
DEFAULT_PER_PERSONA = 10


def render_prompt(relations, per_persona: int = DEFAULT_PER_PERSONA) -> str:
    """Fill the shipped template with a relation vocabulary."""
    names = [str(r) for r in relations]
    if not names or any(not n for n in names):
        raise ManifestError("relation vocabulary must be non-empty names")
    if len(set(names)) != len(names):
        raise ManifestError("relation vocabulary contains duplicate names")
    if per_persona < 1:
        raise ManifestError(f"per_persona must be positive, got {per_persona}")
    template = TEMPLATE_PATH.read_text()
    vocabulary = "\n".join(f"- {name}" for name in names)
    return template.format(per_persona=per_persona, vocabulary=vocabulary)
