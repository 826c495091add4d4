"""Key object term extraction from the user's text prompt.

The prompt is first split into structural sections (question, answer
options, other). Terms that drive detection are taken from the question
section whenever options are present, so multiple-choice answers never
leak into grounding phrases.

The built-in extractor is a deterministic stopword + question-scaffold
filter over a stopword list bundled with the package; an external
extractor can be substituted (in-process callable or a subprocess
speaking the stdin/stdout line protocol).
"""

from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

from .errors import EmptyPrompt, NoTermsFound

# Words that shape a question but never name an object to find.
SCAFFOLD_WORDS = frozenset(
    {
        "what", "which", "where", "how", "many", "much", "kind", "type",
        "color", "image", "picture", "photo", "following", "shown",
    }
)

# Leading option marker: "A."-"E.", "A)"-"E)", "(A)"-"(E)", at the start
# of a line or after whitespace, followed by whitespace.
_OPTION_MARKER = re.compile(r"(?:(?<=^)|(?<=\s))\(?([A-E])[.)]\s")

_TOKEN = re.compile(r"[a-z0-9]+")

_SENTENCE_SPLIT = re.compile(r"(?<=[.?!])\s+")

Extractor = Callable[[str], Sequence[str]]


def _load_stopwords() -> frozenset[str]:
    text = resources.files("zoomer.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in (line.strip() for line in text.splitlines()) if w)


STOPWORDS = _load_stopwords()


@dataclass(frozen=True)
class PromptSections:
    question: str
    options: tuple[str, ...]
    other: str


@dataclass(frozen=True)
class KeyTermSet:
    """Ordered, deduplicated lowercase terms plus the section they came from."""

    terms: tuple[str, ...]
    source_span: str  # "question" | "other" | "full"

    def joined(self) -> str:
        return " ".join(self.terms)


def split_prompt_sections(prompt: str) -> PromptSections:
    """Split a prompt into question, option lines, and the remainder.

    Option segments start at a leading ``A.`` / ``A)`` / ``(A)`` marker
    (through ``E``) and run to the next marker or end of line. The
    question is the first interrogative sentence of the non-option text,
    or the first sentence when none is interrogative.
    """
    trimmed = prompt.strip()
    if not trimmed:
        raise EmptyPrompt("prompt is empty")

    options: list[str] = []
    free_parts: list[str] = []
    for line in trimmed.splitlines():
        marks = list(_OPTION_MARKER.finditer(line))
        if not marks:
            free_parts.append(line.strip())
            continue
        head = line[: marks[0].start()].strip()
        if head:
            free_parts.append(head)
        for m, nxt in zip(marks, marks[1:] + [None]):
            end = nxt.start() if nxt is not None else len(line)
            options.append(line[m.start(): end].strip())

    free_text = " ".join(p for p in free_parts if p).strip()
    question = ""
    other = ""
    if free_text:
        sentences = [s.strip() for s in _SENTENCE_SPLIT.split(free_text) if s.strip()]
        q_idx = next((i for i, s in enumerate(sentences) if s.endswith("?")), 0)
        question = sentences[q_idx]
        other = " ".join(s for i, s in enumerate(sentences) if i != q_idx)
    return PromptSections(question=question, options=tuple(options), other=other)


def builtin_extractor(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stopwords and
    question-scaffold words, deduplicate preserving first appearance."""
    seen: set[str] = set()
    terms: list[str] = []
    for tok in _TOKEN.findall(text.lower()):
        if tok in STOPWORDS or tok in SCAFFOLD_WORDS or tok in seen:
            continue
        seen.add(tok)
        terms.append(tok)
    return terms


class SubprocessExtractor:
    """External extractor invoked as a subprocess.

    The prompt is written to the child's standard input; the child
    writes one term per line and exits 0 on success.
    """

    def __init__(self, command: Sequence[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout

    def __call__(self, text: str) -> list[str]:
        proc = subprocess.run(
            self.command,
            input=text,
            capture_output=True,
            text=True,
            timeout=self.timeout,
        )
        if proc.returncode != 0:
            raise NoTermsFound(
                f"extractor {self.command[0]!r} exited {proc.returncode}: "
                f"{proc.stderr.strip()[:200]}"
            )
        return [line.strip() for line in proc.stdout.splitlines() if line.strip()]


def extract_key_terms(prompt: str, extractor: Extractor | None = None) -> KeyTermSet:
    """Extract ordered key object terms for detector grounding.

    External extractors replace the scaffold filter entirely, but their
    output is still lowercased, checked against the bundled stopword
    list, and deduplicated so KeyTermSet invariants hold regardless of
    the extractor bound.
    """
    sections = split_prompt_sections(prompt)

    # multiple-choice answers must never drive detection
    if sections.options:
        span_name, span_text = "question", sections.question
    else:
        span_name = "full"
        span_text = " ".join(p for p in (sections.question, sections.other) if p)

    if not span_text:
        raise NoTermsFound("prompt has no extractable section")

    if extractor is None:
        terms = builtin_extractor(span_text)
    else:
        seen: set[str] = set()
        terms = []
        for raw in extractor(span_text):
            tok = raw.strip().lower()
            if not tok or tok in STOPWORDS or tok in seen:
                continue
            seen.add(tok)
            terms.append(tok)

    if not terms:
        raise NoTermsFound(f"every token of {span_name!r} section was filtered")
    return KeyTermSet(terms=tuple(terms), source_span=span_name)
