"""Deterministic fuzzy answer grading.

Answers are compared on extracted numbers when the ground truth has any,
otherwise on normalised text. A single tolerance yields a binary verdict;
:func:`multi_tolerance_score` blends five tolerances into a weighted score
that the evolution loop uses to flag failures.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Literal, Sequence, Union

Number = Union[int, float, Decimal, Fraction]

TOLERANCES: tuple[float, ...] = (0.0, 0.01, 0.025, 0.05, 0.10)
FAILURE_THRESHOLD = 0.8
CONTEXT_CHARS = 20

UNIT_MULTIPLIERS = {"million": 10**6, "billion": 10**9, "trillion": 10**12}

_NUMBER_RE = re.compile(
    r"(?<![0-9.])"
    r"(?P<sign>(?<![A-Za-z0-9.])[-+])?"
    r"(?P<body>(?:[0-9]{1,3}(?:,[0-9]{3})+|[0-9]+)(?:\.[0-9]+)?)"
    r"(?![0-9])"
)
_UNIT_AFTER_RE = re.compile(r"^\s*(million|billion|trillion)s?\b", re.IGNORECASE)
_UNIT_WORD_RE = re.compile(r"\b(?:million|billion|trillion)s?\b", re.IGNORECASE)
_PAREN_RE = re.compile(r"\([^()]*\)")
_QUOTES_RE = re.compile("[\"'`‘’“”]")
_WORD_RE = re.compile(r"[^\W\d_]+")

MatchKind = Literal["numeric", "textual", "hybrid", "list"]


@dataclass(frozen=True)
class ExtractedNumber:
    base_value: float
    raw_text: str
    context: str
    unit_multiplier: float
    position: int
    # exact decimal value, used for tolerance comparisons
    exact: Decimal = field(repr=False, compare=False, default=Decimal(0))

    @property
    def is_year_like(self) -> bool:
        """Plain four-digit-style integer in 1900..2100 with no unit, sign or separators."""
        return (
            self.raw_text.isdigit()
            and self.unit_multiplier == 1
            and 1900 <= int(self.raw_text) <= 2100
        )


@dataclass(frozen=True)
class ToleranceLevel:
    tau: float

    @property
    def weight(self) -> float:
        return float(tolerance_weight(self.tau))


@dataclass(frozen=True)
class ScoreResult:
    binary: float
    matched_numbers: int
    match_kind: MatchKind


@dataclass(frozen=True)
class MultiToleranceScore:
    weighted: float
    per_tolerance: dict[float, int]
    is_failure: bool

    def to_dict(self) -> dict:
        return {
            "weighted": self.weighted,
            "per_tolerance": {_tau_key(t): s for t, s in self.per_tolerance.items()},
            "is_failure": self.is_failure,
        }


def _tau_key(tau: float) -> str:
    return format(tau, "g")


def _exact(value: Number) -> Fraction:
    if isinstance(value, float):
        # shortest round-trip repr keeps decimal literals exact (0.05 -> 1/20)
        return Fraction(repr(value))
    return Fraction(value)


def tolerance_weight(tau: Number) -> Fraction:
    """w(tau) = 1 / (1 + 20 tau), computed exactly."""
    return 1 / (1 + 20 * _exact(tau))


def _significant_text(text: str) -> bool:
    stripped = _UNIT_WORD_RE.sub(" ", text)
    return sum(ch.isalpha() for ch in stripped) >= 3


def _is_year_answer(text: str) -> bool:
    nums = extract_numbers(text, is_ground_truth=True)
    return bool(nums) and all(n.is_year_like for n in nums)


def extract_numbers(
    text: str,
    is_ground_truth: bool = True,
    ground_truth_hint: str | None = None,
) -> list[ExtractedNumber]:
    """Pull every numeric token out of ``text``.

    Unit words directly after a number scale it. For predictions
    (``is_ground_truth=False``) bare integers in 1900..2100 are dropped unless
    ``ground_truth_hint`` is itself a year or carries significant text.
    """
    found: list[ExtractedNumber] = []
    for m in _NUMBER_RE.finditer(text):
        body = m.group("body")
        start, end = m.start(), m.end()
        unit = _UNIT_AFTER_RE.match(text[end:end + CONTEXT_CHARS])
        multiplier = UNIT_MULTIPLIERS[unit.group(1).lower()] if unit else 1
        exact = Decimal(body.replace(",", "")) * multiplier
        if m.group("sign") == "-":
            exact = -exact
        found.append(
            ExtractedNumber(
                base_value=float(exact),
                raw_text=m.group(0),
                context=text[max(0, start - CONTEXT_CHARS):end + CONTEXT_CHARS],
                unit_multiplier=float(multiplier),
                position=start,
                exact=exact,
            )
        )
    if not is_ground_truth:
        keep_years = ground_truth_hint is not None and (
            _significant_text(ground_truth_hint) or _is_year_answer(ground_truth_hint)
        )
        if not keep_years:
            found = [n for n in found if not n.is_year_like]
    return found


def score_numeric(gt_value: Number, pred_value: Number, tau: Number) -> int:
    """1 iff the relative error of ``pred_value`` against ``gt_value`` is within ``tau``.

    A zero ground truth only accepts an exact zero.
    """
    g, p, t = _exact(gt_value), _exact(pred_value), _exact(tau)
    if g == 0:
        return int(p == 0)
    return int(abs(g - p) <= t * abs(g))


def _strip_parentheticals(text: str) -> str:
    prev = None
    while prev != text:
        prev, text = text, _PAREN_RE.sub("", text)
    return text


def normalize_text(text: str) -> str:
    text = _QUOTES_RE.sub("", text.strip())
    text = _strip_parentheticals(text)
    return " ".join(text.split()).casefold()


def score_text(gt: str, pred: str) -> int:
    g, p = normalize_text(gt), normalize_text(pred)
    if not g:
        return int(not p)
    return int(g in p)


def key_text_elements(gt: str) -> list[str]:
    """Word tokens of a hybrid answer, minus unit words and parentheticals."""
    text = _UNIT_WORD_RE.sub(" ", _strip_parentheticals(gt))
    return [w.casefold() for w in _WORD_RE.findall(text)]


def _max_matching(gt: Sequence[Decimal], pred: Sequence[Decimal], tau: Number) -> int:
    """Size of a maximum injective assignment of prediction numbers to gt numbers."""
    adj = [[j for j, p in enumerate(pred) if score_numeric(g, p, tau)] for g in gt]
    owner: dict[int, int] = {}

    def augment(i: int, seen: set[int]) -> bool:
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if j not in owner or augment(owner[j], seen):
                owner[j] = i
                return True
        return False

    return sum(augment(i, set()) for i in range(len(gt)))


def score(gt: str, pred: str, tau: Number = 0.0) -> ScoreResult:
    """Binary correctness of ``pred`` against ``gt`` at relative tolerance ``tau``."""
    gt_nums = extract_numbers(gt, is_ground_truth=True)
    if not gt_nums:
        return ScoreResult(float(score_text(gt, pred)), 0, "textual")

    pred_nums = extract_numbers(pred, is_ground_truth=False, ground_truth_hint=gt)
    matched = _max_matching([n.exact for n in gt_nums], [n.exact for n in pred_nums], tau)
    ok = matched == len(gt_nums)

    if _significant_text(gt):
        folded = pred.casefold()
        ok = ok and all(word in folded for word in key_text_elements(gt))
        kind: MatchKind = "hybrid"
    elif len(gt_nums) > 1:
        kind = "list"
    else:
        kind = "numeric"
    return ScoreResult(1.0 if ok else 0.0, matched, kind)


def multi_tolerance_score(
    gt: str,
    pred: str,
    tolerances: Sequence[float] = TOLERANCES,
    threshold: float = FAILURE_THRESHOLD,
) -> MultiToleranceScore:
    per = {tau: int(score(gt, pred, tau).binary) for tau in tolerances}
    weights = {tau: tolerance_weight(tau) for tau in tolerances}
    weighted = sum(weights[t] * s for t, s in per.items()) / sum(weights.values())
    return MultiToleranceScore(float(weighted), per, float(weighted) < threshold)


# A task scorer maps (ground truth, prediction) to a score in [0, 1].
Scorer = Callable[[str, str], float]


def weighted_scorer(gt: str, pred: str) -> float:
    return multi_tolerance_score(gt, pred).weighted


def exact_scorer(gt: str, pred: str) -> float:
    return score(gt, pred, 0.0).binary


SCORERS: dict[str, Scorer] = {"fuzzy": weighted_scorer, "exact": exact_scorer}


def get_scorer(name: str) -> Scorer:
    """Look up a registered scorer; plugins may add entries to :data:`SCORERS`."""
    try:
        return SCORERS[name]
    except KeyError:
        raise KeyError(f"unknown scorer {name!r}; known: {sorted(SCORERS)}") from None
