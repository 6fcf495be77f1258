"""Constraint data model: templates, variables, verifier bindings, prompts.

A library is a pure-data JSON file; each entry binds a checker id from the
verifier registry instead of embedding executable code. Placeholders use
the ``[[VAR1]]`` syntax both inside templates and inside verifier parameter
values (a parameter value equal to ``"[[VAR1]]"``, or such a string inside
a list parameter, is substituted at instantiation time; anything else is a
literal).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from . import verifiers

CATEGORIES = (
    "specific-number-format",
    "limited-grammar",
    "limited-structure",
    "limited-punctuation",
    "limited-word-count",
    "limited-content",
)

VARIABLE_KINDS = ("int", "text", "text-choice")

_PLACEHOLDER_RE = re.compile(r"\[\[([A-Za-z0-9_]+)\]\]")

PROMPT_FIRST_PREFIX = "CONSTRAINT: "
PROMPT_NEXT_PREFIX = "This is a new CONSTRAINT also needs to obey: "


class ConstraintError(Exception):
    pass


class LibraryParseError(ConstraintError):
    pass


class LibraryValidationError(ConstraintError):
    def __init__(self, violations: dict[str, list[str]]):
        self.violations = violations
        lines = [f"{cid}: {'; '.join(msgs)}" for cid, msgs in violations.items()]
        super().__init__("invalid constraints:\n" + "\n".join(lines))


class InstantiationError(ConstraintError):
    pass


@dataclass(frozen=True)
class VariableSpec:
    """One template variable and its candidate values."""

    name: str
    kind: str  # "int" means integer candidates; both text kinds are strings
    candidates: tuple[Any, ...]

    def violations(self) -> list[str]:
        problems = []
        if self.kind not in VARIABLE_KINDS:
            problems.append(f"variable {self.name}: unknown kind {self.kind!r}")
        if not self.candidates:
            problems.append(f"variable {self.name}: empty candidate list")
        if len(set(self.candidates)) != len(self.candidates):
            problems.append(f"variable {self.name}: duplicate candidates")
        for value in self.candidates:
            if self.kind == "int":
                if isinstance(value, bool) or not isinstance(value, int):
                    problems.append(f"variable {self.name}: non-integer candidate {value!r}")
            elif not isinstance(value, str):
                problems.append(f"variable {self.name}: non-text candidate {value!r}")
        return problems


@dataclass(frozen=True)
class VerifierBinding:
    """Checker id plus a parameter mapping of literals and variable refs."""

    id: str
    params: dict[str, Any]


@dataclass(frozen=True)
class MetaConstraint:
    id: str
    category: str
    template: str
    variables: tuple[VariableSpec, ...]
    verifier: VerifierBinding
    explanation: str = ""
    incompatible_with: frozenset[str] = frozenset()
    level_hint: int = 1

    @property
    def placeholder_names(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.template)

    def variable(self, name: str) -> VariableSpec:
        for spec in self.variables:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def instantiation_count(self) -> int:
        """Number of distinct instances (product of candidate counts)."""
        count = 1
        for spec in self.variables:
            count *= len(spec.candidates)
        return count

    def candidate_choices(self) -> Iterable[dict[str, Any]]:
        """Every full variable assignment, in deterministic order."""
        if not self.variables:
            yield {}
            return
        names = [spec.name for spec in self.variables]
        pools = [spec.candidates for spec in self.variables]
        indices = [0] * len(pools)
        while True:
            yield {name: pool[i] for name, pool, i in zip(names, pools, indices)}
            for axis in reversed(range(len(pools))):
                indices[axis] += 1
                if indices[axis] < len(pools[axis]):
                    break
                indices[axis] = 0
            else:
                return


@dataclass(frozen=True)
class ConstraintInstance:
    meta_id: str
    rendered_text: str
    bound_params: dict[str, Any]
    verifier_id: str
    category: str

    def __post_init__(self) -> None:
        if "[[" in self.rendered_text:
            raise InstantiationError(
                f"{self.meta_id}: residual placeholder in {self.rendered_text!r}"
            )

    def content_key(self) -> tuple:
        return (self.meta_id, _freeze(self.bound_params))


def _freeze(value: Any):
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def validate_meta(meta: MetaConstraint) -> list[str]:
    """All invariant violations for one constraint; empty list means ok."""
    problems: list[str] = []
    if meta.category not in CATEGORIES:
        problems.append(f"unknown category {meta.category!r}")

    for spec in meta.variables:
        problems.extend(spec.violations())

    placeholder_names = meta.placeholder_names
    declared = [spec.name for spec in meta.variables]
    if len(set(declared)) != len(declared):
        problems.append("duplicate variable names")
    for name in placeholder_names:
        if name not in declared:
            problems.append(f"unbound placeholder [[{name}]]")
    for name in declared:
        if name not in placeholder_names:
            problems.append(f"variable {name} never appears in template")

    try:
        verifier = verifiers.get_verifier(meta.verifier.id)
    except verifiers.UnknownVerifierError:
        problems.append(f"unknown verifier {meta.verifier.id!r}")
        return problems

    for raw in meta.verifier.params.values():
        for ref in _param_refs(raw):
            if ref not in declared:
                problems.append(f"verifier parameter references undeclared variable {ref}")

    if not problems:
        # Totality check: a sample instantiation must satisfy the checker's
        # parameter schema.
        sample_choice = next(iter(meta.candidate_choices()))
        sample_params = _substitute_params(meta.verifier.params, sample_choice)
        try:
            verifier.coerce_params(sample_params)
        except verifiers.VerifierParamError as exc:
            problems.append(str(exc))
    return problems


def _param_refs(value: Any) -> list[str]:
    if isinstance(value, str):
        match = _PLACEHOLDER_RE.fullmatch(value)
        return [match.group(1)] if match else []
    if isinstance(value, list):
        return [ref for item in value for ref in _param_refs(item)]
    return []


def _substitute_params(params: dict[str, Any], choice: dict[str, Any]) -> dict[str, Any]:
    def sub(value: Any) -> Any:
        if isinstance(value, str):
            match = _PLACEHOLDER_RE.fullmatch(value)
            if match:
                return choice[match.group(1)]
            return value
        if isinstance(value, list):
            return [sub(item) for item in value]
        return value

    return {name: sub(value) for name, value in params.items()}


def instantiate(meta: MetaConstraint, choice: dict[str, Any]) -> ConstraintInstance:
    """Fill every variable of ``meta`` with a chosen candidate value."""
    declared = {spec.name for spec in meta.variables}
    if set(choice) != declared:
        raise InstantiationError(
            f"{meta.id}: choice must assign exactly {sorted(declared)}, got {sorted(choice)}"
        )
    for name, value in choice.items():
        if value not in meta.variable(name).candidates:
            raise InstantiationError(
                f"{meta.id}: value {value!r} not a candidate for {name}"
            )
    rendered = _PLACEHOLDER_RE.sub(lambda m: str(choice[m.group(1)]), meta.template)
    return ConstraintInstance(
        meta_id=meta.id,
        rendered_text=rendered,
        bound_params=_substitute_params(meta.verifier.params, choice),
        verifier_id=meta.verifier.id,
        category=meta.category,
    )


def compatible(a: MetaConstraint, b: MetaConstraint) -> bool:
    """Whether two constraints may co-occur in one instruction."""
    if a.id == b.id:
        return False
    if b.id in a.incompatible_with or a.id in b.incompatible_with:
        return False
    if b.category in a.incompatible_with or a.category in b.incompatible_with:
        return False
    return True


def combination_compatible(metas: Iterable[MetaConstraint]) -> bool:
    items = list(metas)
    for i, a in enumerate(items):
        for b in items[i + 1 :]:
            if not compatible(a, b):
                return False
    return True


def render_prompt(question: str, instances: list[ConstraintInstance]) -> str:
    """Question plus constraints, one per line, with the fixed connectives."""
    if not 1 <= len(instances) <= 3:
        raise ConstraintError(f"need 1..3 constraint instances, got {len(instances)}")
    lines = [question, PROMPT_FIRST_PREFIX + instances[0].rendered_text]
    for instance in instances[1:]:
        lines.append(PROMPT_NEXT_PREFIX + instance.rendered_text)
    return "\n".join(lines)


@dataclass(frozen=True)
class FormatInstruction:
    id: str
    question: str
    question_source_id: str
    instances: tuple[ConstraintInstance, ...]
    prompt: str = field(default="")
    level: int = field(default=0)

    def __post_init__(self) -> None:
        if not 1 <= len(self.instances) <= 3:
            raise ConstraintError(f"need 1..3 instances, got {len(self.instances)}")
        meta_ids = [instance.meta_id for instance in self.instances]
        if len(set(meta_ids)) != len(meta_ids):
            raise ConstraintError(f"duplicate meta ids in instruction: {meta_ids}")
        if not self.prompt:
            object.__setattr__(
                self, "prompt", render_prompt(self.question, list(self.instances))
            )
        object.__setattr__(self, "level", len(self.instances))

    def content_key(self) -> tuple:
        return (
            self.question_source_id,
            frozenset(instance.content_key() for instance in self.instances),
        )


# --- library file format ---

_LIBRARY_FIELDS = (
    "id",
    "category",
    "level_hint",
    "template",
    "vars",
    "verifier",
    "explanation",
    "incompatible_with",
)


def default_library_path() -> Path:
    return Path(str(resources.files("formatforge") / "data" / "constraint_library.json"))


def parse_library(text: str, source: str = "<string>") -> list[MetaConstraint]:
    try:
        raw = json.loads(text)
    except ValueError as exc:
        raise LibraryParseError(f"{source}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list) or not raw:
        raise LibraryParseError(f"{source}: expected a non-empty top-level array")

    constraints: list[MetaConstraint] = []
    for index, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise LibraryParseError(f"{source}[{index}]: expected an object")
        missing = [name for name in _LIBRARY_FIELDS if name not in entry]
        if missing:
            raise LibraryParseError(f"{source}[{index}]: missing fields {missing}")
        unknown = sorted(set(entry) - set(_LIBRARY_FIELDS))
        if unknown:
            raise LibraryParseError(f"{source}[{index}]: unknown fields {unknown}")
        variables = tuple(
            VariableSpec(
                name=var["name"], kind=var["type"], candidates=tuple(var["values"])
            )
            for var in entry["vars"]
        )
        constraints.append(
            MetaConstraint(
                id=entry["id"],
                category=entry["category"],
                template=entry["template"],
                variables=variables,
                verifier=VerifierBinding(
                    id=entry["verifier"]["id"], params=dict(entry["verifier"]["params"])
                ),
                explanation=entry["explanation"],
                incompatible_with=frozenset(entry["incompatible_with"]),
                level_hint=entry["level_hint"],
            )
        )

    duplicate_ids = {c.id for c in constraints if sum(x.id == c.id for x in constraints) > 1}
    violations: dict[str, list[str]] = {}
    if duplicate_ids:
        for cid in sorted(duplicate_ids):
            violations[cid] = ["duplicate constraint id"]
    for meta in constraints:
        problems = validate_meta(meta)
        if problems:
            violations.setdefault(meta.id, []).extend(problems)
    if violations:
        raise LibraryValidationError(violations)
    return constraints


def load_library(path: str | Path) -> list[MetaConstraint]:
    path = Path(path)
    return parse_library(path.read_text(encoding="utf-8"), source=str(path))


def serialize_library(constraints: list[MetaConstraint]) -> str:
    entries = []
    for meta in constraints:
        entries.append(
            {
                "id": meta.id,
                "category": meta.category,
                "level_hint": meta.level_hint,
                "template": meta.template,
                "vars": [
                    {"name": spec.name, "type": spec.kind, "values": list(spec.candidates)}
                    for spec in meta.variables
                ],
                "verifier": {"id": meta.verifier.id, "params": meta.verifier.params},
                "explanation": meta.explanation,
                "incompatible_with": sorted(meta.incompatible_with),
            }
        )
    return json.dumps(entries, indent=2, ensure_ascii=False) + "\n"


def dump_library(constraints: list[MetaConstraint], path: str | Path) -> None:
    Path(path).write_text(serialize_library(constraints), encoding="utf-8")
