"""Corpus path templating and data-driven task discovery.

Two corpus layouts are supported: *directional* corpora distinguish the
two translation directions of a pair, *symmetric* corpora use the same
file pair for both directions.  Note that in symmetric mode the target
side abbreviation is 'trg', not 'tgt'.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

from .core import check_language


class CorpusMode(str, Enum):
    DIRECTIONAL = "directional"
    SYMMETRIC = "symmetric"


DIRECTIONAL_VARS = frozenset({"src_lang", "tgt_lang", "lang_pair"})
SYMMETRIC_VARS = frozenset({"lang_a", "lang_b", "side_a", "side_b", "sorted_pair"})


class TemplateError(ValueError):
    pass


def _placeholders(template: str) -> set[str]:
    names = set()
    for _, name, spec, conv in string.Formatter().parse(template):
        if name is None:
            continue
        if not name or spec or conv or "." in name or "[" in name:
            raise TemplateError(f"malformed placeholder in template: {template!r}")
        names.add(name)
    return names


@dataclass(frozen=True)
class PathTemplate:
    """A path pattern with {variable} placeholders, checked at parse time
    against the whitelist of its corpus mode."""

    template: str
    mode: CorpusMode

    def __post_init__(self) -> None:
        allowed = DIRECTIONAL_VARS if self.mode is CorpusMode.DIRECTIONAL else SYMMETRIC_VARS
        unknown = _placeholders(self.template) - allowed
        if unknown:
            raise TemplateError(
                f"variables {sorted(unknown)} not allowed in {self.mode.value} mode "
                f"(template {self.template!r})"
            )

    def render(self, src: str, tgt: str) -> str:
        if self.mode is CorpusMode.DIRECTIONAL:
            return render_directional(self, src, tgt)
        return render_symmetric(self, src, tgt)


def render_directional(t: PathTemplate, src: str, tgt: str) -> str:
    if t.mode is not CorpusMode.DIRECTIONAL:
        raise TemplateError("render_directional requires a directional template")
    check_language(src)
    check_language(tgt)
    return t.template.format(src_lang=src, tgt_lang=tgt, lang_pair=f"{src}-{tgt}")


def render_symmetric(t: PathTemplate, src: str, tgt: str) -> str:
    """Render for the direction src->tgt against an alphabetically-sorted
    file pair.  The pair is "forward" iff src is the alphabetically first
    language; side_a/side_b flip accordingly."""
    if t.mode is not CorpusMode.SYMMETRIC:
        raise TemplateError("render_symmetric requires a symmetric template")
    check_language(src)
    check_language(tgt)
    lang_a, lang_b = min(src, tgt), max(src, tgt)
    forward = src == lang_a
    return t.template.format(
        lang_a=lang_a,
        lang_b=lang_b,
        side_a="src" if forward else "trg",
        side_b="trg" if forward else "src",
        sorted_pair=f"{lang_a}-{lang_b}",
    )


def discover_tasks(
    src_template: PathTemplate,
    tgt_template: PathTemplate,
    languages: Iterable[str],
    file_exists: Callable[[str], bool],
    include_self_pairs: bool = False,
) -> list[tuple[str, str]]:
    """Find which directed language pairs have data in the corpus.

    A pair survives iff both its rendered source and target paths exist.
    Self-pairs (for autoencoder stages) are probed only when requested.
    The probe is injected so discovery stays filesystem-agnostic.
    """
    langs = sorted({check_language(l) for l in languages})
    found = []
    for src in langs:
        for tgt in langs:
            if src == tgt and not include_self_pairs:
                continue
            if file_exists(src_template.render(src, tgt)) and file_exists(
                tgt_template.render(src, tgt)
            ):
                found.append((src, tgt))
    return found
