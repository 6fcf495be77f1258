"""Question ingestion and seeded synthesis of constraint-bearing datasets.

Synthesis draws each instruction's randomness from (seed, index) only, so
results are byte-identical regardless of how the work is sharded across
workers. Constraint selection is uniform over meta ids and then uniform
over candidate values; combinations that violate a compatibility rule are
rejection-resampled within a bounded budget, and a deterministic
enumeration of the not-yet-emitted combinations backstops deduplication
when the requested count approaches capacity.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .constraints import (
    CATEGORIES,
    ConstraintError,
    FormatInstruction,
    MetaConstraint,
    combination_compatible,
    instantiate,
)
from .ioutils import write_jsonl

RETRY_BUDGET = 100


class ForgeError(Exception):
    pass


@dataclass(frozen=True)
class Question:
    id: str
    text: str


@dataclass(frozen=True)
class QuestionPool:
    questions: tuple[Question, ...]
    source_name: str

    def __post_init__(self) -> None:
        ids = [q.id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise ForgeError("duplicate question ids in pool")
        if any(not q.text.strip() for q in self.questions):
            raise ForgeError("empty question text in pool")


@dataclass(frozen=True)
class DatasetSpec:
    level: int
    train_count: int
    test_count: int
    seed: int

    def __post_init__(self) -> None:
        if self.level not in (1, 2, 3):
            raise ForgeError(f"level must be 1..3, got {self.level}")
        if self.train_count < 0 or self.test_count < 0:
            raise ForgeError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.train_count + self.test_count


def ingest_questions(path: str | Path, fmt: str = "alpaca") -> QuestionPool:
    """Load a question pool from an Alpaca-style JSON file or plain lines.

    Alpaca records contribute their instruction field, with the input field
    appended after a newline when it is non-empty.
    """
    path = Path(path)
    source = path.stem
    questions: list[Question] = []
    if fmt == "alpaca":
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ForgeError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(raw, list):
            raise ForgeError(f"{path}: expected a top-level array of records")
        for index, record in enumerate(raw):
            if not isinstance(record, dict) or "instruction" not in record:
                raise ForgeError(f"{path}[{index}]: expected an object with 'instruction'")
            text = record["instruction"]
            extra = record.get("input", "")
            if extra:
                text = f"{text}\n{extra}"
            questions.append(Question(id=f"{source}-{index:06d}", text=text))
    elif fmt == "plain-lines":
        for index, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
            if line.strip():
                questions.append(Question(id=f"{source}-{index:06d}", text=line.strip()))
    else:
        raise ForgeError(f"unknown question format {fmt!r} (want alpaca or plain-lines)")
    if not questions:
        raise ForgeError(f"{path}: empty pool")
    return QuestionPool(tuple(questions), source)


def _compatible_combos(
    library: list[MetaConstraint], level: int
) -> Iterable[tuple[MetaConstraint, ...]]:
    for combo in itertools.combinations(library, level):
        if combination_compatible(combo):
            yield combo


def capacity(pool: QuestionPool, library: list[MetaConstraint], level: int) -> int:
    """Exact count of distinct producible instructions at one level.

    An instruction is identified by its question and its unordered set of
    constraint instances, so at level 1 with no exclusions this equals
    |questions| x sum over constraints of their candidate products.
    """
    combo_instances = sum(
        _combo_product(combo) for combo in _compatible_combos(library, level)
    )
    return len(pool.questions) * combo_instances


def _combo_product(combo: tuple[MetaConstraint, ...]) -> int:
    product = 1
    for meta in combo:
        product *= meta.instantiation_count()
    return product


def _index_rng(seed: int, index: int, salt: str = "") -> random.Random:
    return random.Random(f"{seed}:{index}:{salt}")


def _draw(
    rng: random.Random,
    pool: QuestionPool,
    library: list[MetaConstraint],
    level: int,
) -> tuple[Question, list[tuple[MetaConstraint, dict[str, Any]]]]:
    question = pool.questions[rng.randrange(len(pool.questions))]
    for _ in range(RETRY_BUDGET):
        metas = rng.sample(library, level)
        if combination_compatible(metas):
            break
    else:
        metas = None
    if metas is None:
        raise ForgeError(
            f"retry budget exhausted drawing a compatible level-{level} combination; "
            "library too constrained"
        )
    picks = []
    for meta in metas:
        choice = {
            spec.name: spec.candidates[rng.randrange(len(spec.candidates))]
            for spec in meta.variables
        }
        picks.append((meta, choice))
    return question, picks


def _materialize(
    question: Question, picks: list[tuple[MetaConstraint, dict[str, Any]]]
) -> FormatInstruction:
    instances = tuple(instantiate(meta, choice) for meta, choice in picks)
    payload = json.dumps(
        [question.id, sorted(str(i.content_key()) for i in instances)], sort_keys=True
    )
    instruction_id = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
    return FormatInstruction(
        id=instruction_id,
        question=question.text,
        question_source_id=question.id,
        instances=instances,
    )


def _enumerate_all(
    pool: QuestionPool, library: list[MetaConstraint], level: int
) -> list[tuple[Question, list[tuple[MetaConstraint, dict[str, Any]]]]]:
    out = []
    for question in pool.questions:
        for combo in _compatible_combos(library, level):
            choice_spaces = [list(meta.candidate_choices()) for meta in combo]
            for choices in itertools.product(*choice_spaces):
                out.append((question, list(zip(combo, choices))))
    return out


def synthesize_split(
    pool: QuestionPool,
    library: list[MetaConstraint],
    spec: DatasetSpec,
    workers: int = 1,
) -> list[FormatInstruction]:
    """Exactly ``spec.total`` distinct instructions at ``spec.level``.

    Deterministic in (pool, library, spec); the worker count only shards
    the per-index draws and never changes the output.
    """
    if not library:
        raise ForgeError("empty constraint library")
    if not pool.questions:
        raise ForgeError("insufficient questions: pool is empty")
    total = spec.total
    if total == 0:
        return []
    space = capacity(pool, library, spec.level)
    if space == 0:
        raise ForgeError(
            f"no compatible level-{spec.level} combination exists for this library"
        )
    if total > space:
        raise ForgeError(
            f"requested {total} instructions but capacity at level {spec.level} is {space}"
        )

    def draw_index(index: int):
        return _draw(_index_rng(spec.seed, index), pool, library, spec.level)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            drawn = list(executor.map(draw_index, range(total)))
    else:
        drawn = [draw_index(index) for index in range(total)]

    seen: set[tuple] = set()
    instructions: list[FormatInstruction] = []
    unseen_pool: list[tuple] | None = None
    for index, (question, picks) in enumerate(drawn):
        instruction = _materialize(question, picks)
        if instruction.content_key() not in seen:
            seen.add(instruction.content_key())
            instructions.append(instruction)
            continue
        # Duplicate: redraw from a per-index substream, then fall back to a
        # deterministic enumeration of whatever has not been emitted yet.
        rng = _index_rng(spec.seed, index, salt="dedup")
        replacement = None
        for _ in range(RETRY_BUDGET):
            candidate = _materialize(*_draw(rng, pool, library, spec.level))
            if candidate.content_key() not in seen:
                replacement = candidate
                break
        if replacement is None:
            if unseen_pool is None:
                unseen_pool = _enumerate_all(pool, library, spec.level)
            remaining = [
                item
                for item in unseen_pool
                if _materialize(*item).content_key() not in seen
            ]
            if not remaining:
                raise ForgeError("capacity exhausted while deduplicating")
            replacement = _materialize(*remaining[rng.randrange(len(remaining))])
        seen.add(replacement.content_key())
        instructions.append(replacement)
    return instructions


def split_train_test(
    instructions: list[FormatInstruction], spec: DatasetSpec
) -> tuple[list[FormatInstruction], list[FormatInstruction]]:
    return instructions[: spec.train_count], instructions[spec.train_count :]


def dataset_stats(instructions: list[FormatInstruction]) -> dict[str, Any]:
    """Distribution report: counts per level, per category, per meta id."""
    by_level = {level: 0 for level in (1, 2, 3)}
    by_category = {category: 0 for category in CATEGORIES}
    by_meta: dict[str, int] = {}
    question_uses: dict[str, int] = {}
    for instruction in instructions:
        by_level[instruction.level] += 1
        question_uses[instruction.question_source_id] = (
            question_uses.get(instruction.question_source_id, 0) + 1
        )
        for instance in instruction.instances:
            by_category[instance.category] += 1
            by_meta[instance.meta_id] = by_meta.get(instance.meta_id, 0) + 1
    return {
        "total": len(instructions),
        "by_level": by_level,
        "by_category": by_category,
        "by_meta": dict(sorted(by_meta.items())),
        "questions_reused": sum(1 for uses in question_uses.values() if uses > 1),
    }


# --- dataset file format ---

def instruction_to_record(instruction: FormatInstruction) -> dict[str, Any]:
    return {
        "id": instruction.id,
        "level": instruction.level,
        "question": instruction.question,
        "question_source_id": instruction.question_source_id,
        "constraints": [
            {
                "meta_id": instance.meta_id,
                "rendered_text": instance.rendered_text,
                "bound_params": instance.bound_params,
            }
            for instance in instruction.instances
        ],
        "prompt": instruction.prompt,
    }


def write_instructions(path: str | Path, instructions: list[FormatInstruction]) -> None:
    write_jsonl(path, (instruction_to_record(i) for i in instructions))


def read_instructions(
    path: str | Path, library: list[MetaConstraint]
) -> list[FormatInstruction]:
    """Load a dataset file, re-binding each constraint through the library."""
    from .constraints import ConstraintInstance
    from .ioutils import read_jsonl

    by_id = {meta.id: meta for meta in library}
    instructions = []
    for record in read_jsonl(path):
        instances = []
        for entry in record["constraints"]:
            try:
                meta = by_id[entry["meta_id"]]
            except KeyError:
                raise ConstraintError(
                    f"{path}: instruction {record['id']} references unknown "
                    f"constraint {entry['meta_id']!r}"
                ) from None
            instances.append(
                ConstraintInstance(
                    meta_id=entry["meta_id"],
                    rendered_text=entry["rendered_text"],
                    bound_params=entry["bound_params"],
                    verifier_id=meta.verifier.id,
                    category=meta.category,
                )
            )
        instructions.append(
            FormatInstruction(
                id=record["id"],
                question=record["question"],
                question_source_id=record["question_source_id"],
                instances=tuple(instances),
                prompt=record["prompt"],
            )
        )
    return instructions
