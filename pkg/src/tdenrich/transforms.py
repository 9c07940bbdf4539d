"""Deterministic local components: lexicon sentiment and keyword topics.

Both are stand-ins for neural classifiers. They exist so a pipeline can be
exercised end to end without a model server, and they are exact enough to be
checked by hand.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .engine import Component
from .frame import Frame

POSITIVE, NEUTRAL, NEGATIVE = 2, 1, 0


@lru_cache(maxsize=4096)
def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Whitespace split, strip edge punctuation, lowercase, drop empties."""
    out = []
    for raw in text.split():
        tok = _strip_punct(raw).lower()
        if tok:
            out.append(tok)
    return out


def is_url(token: str) -> bool:
    low = token.lower()
    return low.startswith("http://") or low.startswith("https://")


def read_terms(path) -> list[str]:
    """One term per line; blank lines and ``#`` comments are skipped."""
    source = path if hasattr(path, "read_text") else Path(path)
    lines = source.read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip() and not line.lstrip().startswith("#")]


# ---------------------------------------------------------------------------
# sentiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lexicon:
    positive: frozenset[str]
    negative: frozenset[str]

    def __init__(self, positive: Iterable[str], negative: Iterable[str]):
        pos = frozenset(t.lower() for t in positive)
        neg = frozenset(t.lower() for t in negative)
        for term in pos | neg:
            if not term or len(term.split()) != 1:
                raise ValueError(f"lexicon term {term!r} is not a single token")
        both = pos & neg
        if both:
            raise ValueError(f"terms listed as both positive and negative: {sorted(both)}")
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negative", neg)

    @classmethod
    def from_files(cls, positive: str | Path, negative: str | Path) -> Lexicon:
        return cls(read_terms(positive), read_terms(negative))

    @classmethod
    def default(cls) -> Lexicon:
        """Small English lexicon bundled with the package."""
        base = resources.files("tdenrich") / "data"
        return cls(
            read_terms(base / "positive.txt"),
            read_terms(base / "negative.txt"),
        )


def sentiment_score(text: str, lexicon: Lexicon) -> int:
    score = 0
    for tok in tokenize(text):
        if tok in lexicon.positive:
            score += 1
        elif tok in lexicon.negative:
            score -= 1
    return score


def sentiment(texts: Iterable[str], lexicon: Lexicon) -> list[int]:
    """Classify each text: 2 positive, 1 neutral, 0 negative."""
    out = []
    for text in texts:
        score = sentiment_score(text, lexicon)
        out.append(POSITIVE if score > 0 else NEUTRAL if score == 0 else NEGATIVE)
    return out


class SentimentClassifier(Component):
    """Lexicon sentiment over a text column; output coded 0/1/2."""

    provides = ("sentiment",)

    def __init__(self, lexicon: Lexicon | None = None, text_column: str = "text", output: str = "sentiment"):
        self.lexicon = lexicon or Lexicon.default()
        self.text_column = text_column
        self.output = output

    def inputs(self):
        return [self.text_column]

    def outputs(self):
        return [self.output]

    def infer(self, data: Frame):
        return {self.output: sentiment(data[self.text_column], self.lexicon)}

    def config(self):
        return {
            "positive": sorted(self.lexicon.positive),
            "negative": sorted(self.lexicon.negative),
            "text_column": self.text_column,
            "output": self.output,
        }

    @classmethod
    def from_config(cls, config, services=None):
        cfg = dict(config)
        if "positive" in cfg or "negative" in cfg:
            lexicon = Lexicon(cfg.pop("positive", ()), cfg.pop("negative", ()))
        else:
            lexicon = Lexicon.default()
        return cls(lexicon, **cfg)


# ---------------------------------------------------------------------------
# topics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TopicSpec:
    topics: tuple[tuple[int, frozenset[str]], ...]

    def __init__(self, topics: Mapping[int, Iterable[str]] | Iterable[tuple[int, Iterable[str]]]):
        items = topics.items() if isinstance(topics, Mapping) else topics
        seen: set[int] = set()
        parsed = []
        for topic_id, keywords in items:
            topic_id = int(topic_id)
            if topic_id < 0:
                raise ValueError(f"topic id {topic_id} is negative")
            if topic_id in seen:
                raise ValueError(f"duplicate topic id {topic_id}")
            seen.add(topic_id)
            kws = frozenset(k.lower() for k in keywords)
            if not kws:
                raise ValueError(f"topic {topic_id} has no keywords")
            parsed.append((topic_id, kws))
        object.__setattr__(self, "topics", tuple(parsed))

    @classmethod
    def from_file(cls, path: str | Path) -> TopicSpec:
        """Parse ``topic_id<TAB>term`` lines."""
        grouped: dict[int, list[str]] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                topic_id, term = line.split("\t")
                grouped.setdefault(int(topic_id), []).append(term.strip())
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected 'topic_id<TAB>term', got {line!r}") from None
        return cls(grouped)

    def to_list(self) -> list:
        return [[tid, sorted(kws)] for tid, kws in sorted(self.topics)]


def topic_tokens(text: str, strip_mentions: bool = False) -> set[str]:
    # mentions are filtered before tokenizing, which would strip the "@"
    kept = [t for t in text.split() if not is_url(t) and not (strip_mentions and t.startswith("@"))]
    return set(tokenize(" ".join(kept)))


def assign_topic(
    texts: Sequence[str],
    spec: TopicSpec,
    min_df: int | None = None,
    strip_mentions: bool = False,
) -> list[int | None]:
    """Keyword-overlap topic for each text.

    URLs are removed before tokenizing. The topic with the largest keyword
    overlap wins, ties go to the lowest topic id, and no overlap gives None.
    With ``min_df`` set, keywords that occur in fewer than ``min_df`` of the
    given texts are ignored.
    """
    docs = [topic_tokens(t, strip_mentions) for t in texts]
    topics = sorted(spec.topics)
    if min_df:
        df: dict[str, int] = {}
        for doc in docs:
            for tok in doc:
                df[tok] = df.get(tok, 0) + 1
        topics = [(tid, frozenset(k for k in kws if df.get(k, 0) >= min_df)) for tid, kws in topics]
    out: list[int | None] = []
    for doc in docs:
        best, best_overlap = None, 0
        for tid, kws in topics:
            overlap = len(doc & kws)
            if overlap > best_overlap:
                best, best_overlap = tid, overlap
        out.append(best)
    return out


class TopicAssigner(Component):
    provides = ("topic",)

    def __init__(
        self,
        spec: TopicSpec,
        text_column: str = "text",
        output: str = "topic",
        min_df: int | None = None,
        strip_mentions: bool = False,
    ):
        self.spec = spec
        self.text_column = text_column
        self.output = output
        self.min_df = min_df
        self.strip_mentions = strip_mentions

    def inputs(self):
        return [self.text_column]

    def outputs(self):
        return [self.output]

    def infer(self, data: Frame):
        topics = assign_topic(data[self.text_column], self.spec, self.min_df, self.strip_mentions)
        return {self.output: topics}

    def config(self):
        return {
            "topics": self.spec.to_list(),
            "text_column": self.text_column,
            "output": self.output,
            "min_df": self.min_df,
            "strip_mentions": self.strip_mentions,
        }

    @classmethod
    def from_config(cls, config, services=None):
        cfg = dict(config)
        spec = TopicSpec([(tid, kws) for tid, kws in cfg.pop("topics")])
        return cls(spec, **cfg)
