"""Dataset loading, categorisation, stratified splitting and batch sampling."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

from .errors import ConfigError

log = logging.getLogger(__name__)

UNCATEGORIZED = "uncategorized"
DEFAULT_CATEGORIES = 8


@dataclass(frozen=True)
class Example:
    id: str
    question: str
    ground_truth: str
    category: str | None = None

    def to_json(self) -> dict:
        row = {"id": self.id, "question": self.question, "answer": self.ground_truth}
        if self.category is not None:
            row["category"] = self.category
        return row

    @classmethod
    def from_json(cls, row: dict) -> "Example":
        answer = row.get("answer", row.get("ground_truth"))
        if answer is None or str(answer) == "":
            raise ConfigError(f"example {row.get('id')!r} has no answer")
        return cls(
            id=str(row["id"]),
            question=str(row["question"]),
            ground_truth=str(answer),
            category=row.get("category"),
        )


def load_jsonl(path: str | Path) -> list[Example]:
    examples = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                ex = Example.from_json(json.loads(line))
            except (KeyError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad example row ({exc})") from exc
            if ex.id in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate id {ex.id!r}")
            seen.add(ex.id)
            examples.append(ex)
    return examples


def write_jsonl(path: str | Path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


# -- categorisation ---------------------------------------------------------

Classifier = Callable[[Example], str]


class HashClassifier:
    """Offline fallback: bucket the question text by SHA-256 into ``k`` labels."""

    def __init__(self, k: int = DEFAULT_CATEGORIES):
        if k < 1:
            raise ConfigError("category count must be >= 1")
        self.k = k

    def bucket(self, question: str) -> int:
        digest = hashlib.sha256(question.encode("utf-8")).hexdigest()
        return int(digest, 16) % self.k

    def __call__(self, example: Example) -> str:
        return f"cat-{self.bucket(example.question)}"


def categorize(
    examples: list[Example],
    classifier: Classifier,
    retries: int = 3,
) -> list[Example]:
    """Return copies of ``examples`` each carrying a single category label.

    A classifier that keeps failing after ``retries`` attempts leaves the
    example in the reserved ``uncategorized`` bucket.
    """
    out = []
    for ex in examples:
        label = None
        for attempt in range(retries):
            try:
                label = str(classifier(ex)).strip()
                break
            except Exception as exc:  # backend failures are not fatal here
                log.warning("classifier failed on %s (attempt %d): %s", ex.id, attempt + 1, exc)
        out.append(replace(ex, category=label or UNCATEGORIZED))
    if out:
        log.info("categorised %d examples into %d categories", len(out),
                 len({e.category for e in out}))
    return out


# -- stratified split -------------------------------------------------------

@dataclass
class DatasetSplits:
    train_pools: dict[str, list[Example]]
    validation: list[Example]
    test: list[Example]

    @property
    def train(self) -> list[Example]:
        return [ex for cat in sorted(self.train_pools) for ex in self.train_pools[cat]]

    def category_counts(self) -> dict[str, dict[str, int]]:
        counts: dict[str, dict[str, int]] = defaultdict(lambda: {"train": 0, "validation": 0, "test": 0})
        for cat, pool in self.train_pools.items():
            counts[cat]["train"] += len(pool)
        for ex in self.validation:
            counts[ex.category]["validation"] += 1
        for ex in self.test:
            counts[ex.category]["test"] += 1
        return {cat: counts[cat] for cat in sorted(counts)}


def _allocate(
    sizes: dict[str, int],
    target: int,
    floors: dict[str, int],
    capacity: dict[str, int],
) -> dict[str, int]:
    """Largest-remainder apportionment of ``target`` across categories.

    Floors are honoured even if they push the total past ``target``.
    """
    total = sum(sizes.values())
    quota = {c: n * target / total for c, n in sizes.items()}
    alloc = {c: min(capacity[c], max(floors[c], math.floor(quota[c]))) for c in sizes}
    remaining = target - sum(alloc.values())
    order = sorted(sizes, key=lambda c: (-(quota[c] - math.floor(quota[c])), c))
    while remaining > 0:
        progressed = False
        for c in order:
            if remaining == 0:
                break
            if alloc[c] < capacity[c] and alloc[c] < math.ceil(quota[c]):
                alloc[c] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            # quotas exhausted by floors/capacity: spill into any category with room
            for c in order:
                if remaining and alloc[c] < capacity[c]:
                    alloc[c] += 1
                    remaining -= 1
                    progressed = True
            if not progressed:
                break
    return alloc


def stratified_split(
    examples: list[Example],
    train_fraction: float,
    validation_fraction: float,
    seed: int,
) -> DatasetSplits:
    """Three-way disjoint split, proportional per category.

    Totals are ``floor(N * fraction)``. Categories with two or more members
    get at least one train and one validation example; singletons go to train.
    """
    if not (0 < train_fraction < 1) or not (0 <= validation_fraction < 1):
        raise ConfigError("fractions must lie in (0, 1) for train and [0, 1) for validation")
    if train_fraction + validation_fraction >= 1:
        raise ConfigError("train_fraction + validation_fraction must be < 1")
    if any(ex.category is None for ex in examples):
        raise ConfigError("every example needs a category before splitting")
    if len({ex.id for ex in examples}) != len(examples):
        raise ConfigError("example ids must be unique")

    by_cat: dict[str, list[Example]] = defaultdict(list)
    for ex in sorted(examples, key=lambda e: e.id):
        by_cat[ex.category].append(ex)
    if not by_cat:
        return DatasetSplits({}, [], [])

    sizes = {c: len(v) for c, v in sorted(by_cat.items())}
    n = len(examples)
    train_alloc = _allocate(
        sizes,
        math.floor(n * train_fraction),
        floors={c: 1 for c in sizes},
        capacity={c: s - 1 if s >= 2 else s for c, s in sizes.items()},
    )
    val_alloc = _allocate(
        sizes,
        math.floor(n * validation_fraction),
        floors={c: 1 if s >= 2 else 0 for c, s in sizes.items()},
        capacity={c: s - train_alloc[c] for c, s in sizes.items()},
    )

    rng = random.Random(seed)
    pools, validation, test = {}, [], []
    for cat in sizes:
        members = list(by_cat[cat])
        rng.shuffle(members)
        t, v = train_alloc[cat], val_alloc[cat]
        pools[cat] = members[:t]
        validation.extend(members[t:t + v])
        test.extend(members[t + v:])
    return DatasetSplits(pools, validation, test)


def split_manifest(splits: DatasetSplits, seed: int, train_fraction: float,
                   validation_fraction: float, categories: int | None = None) -> dict:
    return {
        "seed": seed,
        "train_fraction": train_fraction,
        "validation_fraction": validation_fraction,
        "categories": categories,
        "sizes": {
            "train": len(splits.train),
            "validation": len(splits.validation),
            "test": len(splits.test),
        },
        "per_category": splits.category_counts(),
    }


def write_splits(out_dir: str | Path, splits: DatasetSplits, manifest: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "train.jsonl", splits.train)
    write_jsonl(out / "validation.jsonl", splits.validation)
    write_jsonl(out / "test.jsonl", splits.test)
    (out / "split_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def splits_from_files(train: str | Path, validation: str | Path,
                      test: str | Path | None = None) -> DatasetSplits:
    pools: dict[str, list[Example]] = defaultdict(list)
    for ex in load_jsonl(train):
        pools[ex.category or UNCATEGORIZED].append(ex)
    return DatasetSplits(
        dict(sorted(pools.items())),
        load_jsonl(validation),
        load_jsonl(test) if test else [],
    )


# -- sampling ---------------------------------------------------------------

@dataclass
class SamplerState:
    """Cursor state for category-aware sampling without replacement.

    ``max_draws`` caps the total number of examples served (an epoch budget);
    ``None`` means unbounded.
    """

    seed: int
    epoch: int = 0
    draws: int = 0
    max_draws: int | None = None
    next_category: int = 0
    cursors: dict[str, int] = field(default_factory=dict)
    orders: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def with_epoch_budget(cls, splits: DatasetSplits, seed: int, epochs: float | None) -> "SamplerState":
        total = sum(len(p) for p in splits.train_pools.values())
        budget = None if epochs is None else math.floor(epochs * total + 1e-9)
        return cls(seed=seed, max_draws=budget)

    @property
    def remaining(self) -> int | None:
        return None if self.max_draws is None else max(0, self.max_draws - self.draws)

    def epochs_consumed(self, pool_total: int) -> float:
        return self.draws / pool_total if pool_total else 0.0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SamplerState":
        return cls(**data)


def _reshuffle(splits: DatasetSplits, state: SamplerState) -> None:
    for cat in sorted(splits.train_pools):
        ids = [ex.id for ex in splits.train_pools[cat]]
        random.Random(f"{state.seed}:{state.epoch}:{cat}").shuffle(ids)
        state.orders[cat] = ids
        state.cursors[cat] = 0


def sample_batch(splits: DatasetSplits, state: SamplerState, batch_size: int) -> list[Example]:
    """Draw up to ``batch_size`` examples round-robin across category pools.

    Pools are consumed without replacement; once every pool is exhausted they
    are reshuffled and the epoch counter advances. Returns fewer examples (or
    none) when the draw budget runs out.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    cats = sorted(c for c, pool in splits.train_pools.items() if pool)
    if not cats:
        raise ConfigError("training pools are empty")
    lookup = {ex.id: ex for cat in cats for ex in splits.train_pools[cat]}
    if not state.orders:
        _reshuffle(splits, state)

    n = batch_size if state.remaining is None else min(batch_size, state.remaining)
    batch = []
    for _ in range(n):
        if all(state.cursors[c] >= len(state.orders[c]) for c in cats):
            state.epoch += 1
            _reshuffle(splits, state)
        for step in range(len(cats)):
            cat = cats[(state.next_category + step) % len(cats)]
            if state.cursors[cat] < len(state.orders[cat]):
                batch.append(lookup[state.orders[cat][state.cursors[cat]]])
                state.cursors[cat] += 1
                state.next_category = (cats.index(cat) + 1) % len(cats)
                break
        state.draws += 1
    return batch
