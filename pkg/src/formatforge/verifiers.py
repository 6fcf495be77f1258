"""Built-in deterministic format checkers and the verdict/report model.

Every checker is a pure function from (response text, parameters) to a
:class:`ConstraintVerdict`. Checkers are looked up by id in a module-level
registry; constraint libraries bind checker ids plus parameter values
instead of shipping executable code.

Soft scores: a passing verdict is always 1.0. The word-count checkers grade
failures as ``1 - overshoot/limit`` clamped to [0, 1]; the clamp kicks in
once the count reaches twice the limit, where the raw formula would go
negative. All other checkers have no natural gradation and return 0.0 on
failure.
"""

from __future__ import annotations

import json
import re
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

import yaml

from . import langid, textseg


class VerifierError(Exception):
    """Base class for verification setup failures (not verdicts)."""


class UnknownVerifierError(VerifierError):
    pass


class VerifierParamError(VerifierError):
    pass


@dataclass(frozen=True)
class ConstraintVerdict:
    """Outcome of one checker on one response."""

    passed: bool
    soft: float
    detail: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.soft <= 1.0:
            raise ValueError(f"soft score {self.soft} outside [0, 1]")
        if self.passed and self.soft != 1.0:
            raise ValueError("passing verdict must carry soft = 1.0")


@dataclass(frozen=True)
class VerificationReport:
    """Per-constraint verdicts plus the aggregate indicator.

    ``aggregate`` is 1 exactly when every constraint passed (the product of
    the boolean verdicts); ``aggregate_soft`` is the arithmetic mean of the
    per-constraint soft scores.
    """

    per_constraint: tuple[ConstraintVerdict, ...]
    aggregate: int = field(init=False)
    aggregate_soft: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.per_constraint:
            raise ValueError("report needs at least one verdict")
        object.__setattr__(
            self, "aggregate", int(all(v.passed for v in self.per_constraint))
        )
        object.__setattr__(
            self,
            "aggregate_soft",
            sum(v.soft for v in self.per_constraint) / len(self.per_constraint),
        )


def _ok(detail: str = "") -> ConstraintVerdict:
    return ConstraintVerdict(True, 1.0, detail)


def _bad(detail: str = "", soft: float = 0.0) -> ConstraintVerdict:
    return ConstraintVerdict(False, soft, detail)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: type
    required: bool = True
    default: Any = None


@dataclass(frozen=True)
class Verifier:
    id: str
    params: tuple[ParamSpec, ...]
    fn: Callable[..., ConstraintVerdict]

    def coerce_params(self, raw: dict[str, Any]) -> dict[str, Any]:
        values: dict[str, Any] = {}
        for spec in self.params:
            if spec.name in raw:
                value = raw[spec.name]
                if spec.kind is int and (isinstance(value, bool) or not isinstance(value, int)):
                    raise VerifierParamError(
                        f"{self.id}: parameter '{spec.name}' must be an integer, got {value!r}"
                    )
                if spec.kind is str and not isinstance(value, str):
                    raise VerifierParamError(
                        f"{self.id}: parameter '{spec.name}' must be a string, got {value!r}"
                    )
                if spec.kind is bool and not isinstance(value, bool):
                    raise VerifierParamError(
                        f"{self.id}: parameter '{spec.name}' must be a boolean, got {value!r}"
                    )
                if spec.kind is list:
                    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                        raise VerifierParamError(
                            f"{self.id}: parameter '{spec.name}' must be a list of strings"
                        )
                values[spec.name] = value
            elif spec.required:
                raise VerifierParamError(f"{self.id}: missing required parameter '{spec.name}'")
            else:
                values[spec.name] = spec.default
        unknown = set(raw) - {spec.name for spec in self.params}
        if unknown:
            raise VerifierParamError(f"{self.id}: unknown parameters {sorted(unknown)}")
        return values

    def run(self, response: str, raw_params: dict[str, Any]) -> ConstraintVerdict:
        return self.fn(response, **self.coerce_params(raw_params))


REGISTRY: dict[str, Verifier] = {}


def _register(verifier_id: str, *params: ParamSpec):
    def decorator(fn: Callable[..., ConstraintVerdict]):
        REGISTRY[verifier_id] = Verifier(verifier_id, params, fn)
        return fn

    return decorator


def get_verifier(verifier_id: str) -> Verifier:
    try:
        return REGISTRY[verifier_id]
    except KeyError:
        raise UnknownVerifierError(f"unknown verifier id: {verifier_id!r}") from None


def verify(instance, response: str) -> ConstraintVerdict:
    """Run the checker bound to a constraint instance against a response."""
    return get_verifier(instance.verifier_id).run(response, dict(instance.bound_params))


def verify_all(instruction, response: str) -> VerificationReport:
    """Verdicts for every constraint of an instruction, in instance order."""
    return VerificationReport(
        tuple(verify(instance, response) for instance in instruction.instances)
    )


# --- word count ---

@_register("word-count-max", ParamSpec("limit", int))
def _word_count_max(text: str, limit: int) -> ConstraintVerdict:
    count = textseg.word_count(text)
    detail = f"{count} words (limit {limit})"
    if count <= limit:
        return _ok(detail)
    soft = max(0.0, min(1.0, 1.0 - (count - limit) / limit))
    return _bad(detail, soft)


@_register("word-count-range", ParamSpec("lo", int), ParamSpec("hi", int))
def _word_count_range(text: str, lo: int, hi: int) -> ConstraintVerdict:
    count = textseg.word_count(text)
    detail = f"{count} words (range {lo}-{hi})"
    if lo <= count <= hi:
        return _ok(detail)
    if count > hi:
        soft = 1.0 - (count - hi) / hi
    else:
        soft = 1.0 - (lo - count) / lo
    return _bad(detail, max(0.0, min(1.0, soft)))


# --- structure ---

_FENCE_RE = re.compile(r"\A```[a-zA-Z0-9_-]*\s*\n(.*)\n```\s*\Z", re.DOTALL)


@_register("json-wellformed", ParamSpec("lenient", bool, required=False, default=False))
def _json_wellformed(text: str, lenient: bool) -> ConstraintVerdict:
    body = text.strip()
    if lenient:
        match = _FENCE_RE.match(body)
        if match:
            body = match.group(1)
    try:
        json.loads(body)
    except ValueError as exc:
        return _bad(f"not valid JSON: {exc}")
    return _ok("valid JSON")


@_register("yaml-wellformed")
def _yaml_wellformed(text: str) -> ConstraintVerdict:
    # Any plain string parses as a YAML scalar, so a useful check also
    # requires a structured root (mapping or sequence).
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        return _bad(f"not valid YAML: {exc}")
    if not isinstance(document, (dict, list)):
        return _bad(f"YAML root is {type(document).__name__}, not a mapping or sequence")
    return _ok("valid YAML document")


@_register("paragraph-count-exact", ParamSpec("count", int))
def _paragraph_count_exact(text: str, count: int) -> ConstraintVerdict:
    n = len(textseg.paragraphs(text))
    detail = f"{n} paragraphs (want {count})"
    return _ok(detail) if n == count else _bad(detail)


@_register("paragraph-count-max", ParamSpec("count", int))
def _paragraph_count_max(text: str, count: int) -> ConstraintVerdict:
    n = len(textseg.paragraphs(text))
    detail = f"{n} paragraphs (max {count})"
    return _ok(detail) if n <= count else _bad(detail)


@_register("sentences-per-paragraph-max", ParamSpec("count", int))
def _sentences_per_paragraph_max(text: str, count: int) -> ConstraintVerdict:
    counts = textseg.sentences_per_paragraph(text)
    detail = f"sentences per paragraph {counts} (max {count})"
    return _ok(detail) if all(c <= count for c in counts) else _bad(detail)


@_register("sentence-count-exact", ParamSpec("count", int))
def _sentence_count_exact(text: str, count: int) -> ConstraintVerdict:
    n = len(textseg.sentences(text))
    detail = f"{n} sentences (want {count})"
    return _ok(detail) if n == count else _bad(detail)


# --- grammar / style ---

@_register("sentence-starts-with-letter", ParamSpec("letter", str))
def _sentence_starts_with_letter(text: str, letter: str) -> ConstraintVerdict:
    if len(letter) != 1 or not letter.isalpha():
        raise VerifierParamError(f"letter must be a single alphabetic character, got {letter!r}")
    target = letter.casefold()
    for sentence in textseg.sentences(text):
        first_alpha = next((ch for ch in sentence if ch.isalpha()), None)
        if first_alpha is None:
            continue  # no alphabetic content, nothing to check
        if first_alpha.casefold() != target:
            return _bad(f"sentence starts with {first_alpha!r}: {sentence[:40]!r}")
    return _ok(f"all sentences start with {letter!r}")


_PASSIVE_RE = re.compile(
    r"\b(?:am|is|are|was|were|be|been|being)\s+(?:\w+ly\s+)?"
    r"(?:\w+ed|written|given|taken|known|seen|done|made|shown|built|sent|kept|held|found|chosen|told|brought|put|set)\b",
    re.IGNORECASE,
)


@_register("voice-heuristic", ParamSpec("mode", str))
def _voice_heuristic(text: str, mode: str) -> ConstraintVerdict:
    # Heuristic: a "to be" form followed by a past-participle-shaped word.
    # No grammatical parse is attempted.
    if mode not in ("active", "passive"):
        raise VerifierParamError(f"mode must be 'active' or 'passive', got {mode!r}")
    match = _PASSIVE_RE.search(text)
    if mode == "passive":
        if match:
            return _ok(f"passive pattern found: {match.group(0)!r}")
        return _bad("no passive construction found")
    if match:
        return _bad(f"passive pattern found: {match.group(0)!r}")
    return _ok("no passive construction found")


# --- punctuation / case ---

@_register("paragraph-ends-with-punct", ParamSpec("mark", str))
def _paragraph_ends_with_punct(text: str, mark: str) -> ConstraintVerdict:
    if len(mark) != 1:
        raise VerifierParamError(f"mark must be a single character, got {mark!r}")
    for block in textseg.paragraphs(text):
        last = block.rstrip()[-1:]
        if last != mark:
            return _bad(f"paragraph ends with {last!r}, want {mark!r}")
    return _ok(f"all paragraphs end with {mark!r}")


@_register("case-style", ParamSpec("style", str))
def _case_style(text: str, style: str) -> ConstraintVerdict:
    # Only cased letters are constrained; caseless scripts (digits, CJK)
    # conform to any style.
    if style == "all-caps":
        offender = next((ch for ch in text if ch.islower()), None)
        if offender is None:
            return _ok("no lowercase letters")
        return _bad(f"lowercase letter {offender!r} present")
    if style == "all-lowercase":
        offender = next((ch for ch in text if ch.isupper()), None)
        if offender is None:
            return _ok("no uppercase letters")
        return _bad(f"uppercase letter {offender!r} present")
    if style == "title-case":
        for token in textseg.words(text):
            first_alpha = next((ch for ch in token if ch.isalpha()), None)
            if first_alpha is not None and first_alpha.islower():
                return _bad(f"word {token!r} not capitalized")
        return _ok("every word capitalized")
    raise VerifierParamError(
        f"style must be one of all-caps, all-lowercase, title-case; got {style!r}"
    )


# --- content ---

@_register("language-is", ParamSpec("language", str))
def _language_is(text: str, language: str) -> ConstraintVerdict:
    if language not in langid.SUPPORTED_LANGUAGES:
        raise VerifierParamError(
            f"language must be one of {langid.SUPPORTED_LANGUAGES}, got {language!r}"
        )
    detected = langid.detect_language(text)
    detail = f"detected {detected or 'unknown'} (want {language})"
    return _ok(detail) if detected == language else _bad(detail)


def _keyword_re(keyword: str) -> re.Pattern[str]:
    return re.compile(rf"\b{re.escape(keyword)}\b", re.IGNORECASE)


@_register("keyword-include", ParamSpec("keywords", list))
def _keyword_include(text: str, keywords: list[str]) -> ConstraintVerdict:
    missing = [kw for kw in keywords if not _keyword_re(kw).search(text)]
    if missing:
        return _bad(f"missing keywords: {missing}")
    return _ok(f"all keywords present: {keywords}")


@_register("keyword-exclude", ParamSpec("keywords", list))
def _keyword_exclude(text: str, keywords: list[str]) -> ConstraintVerdict:
    present = [kw for kw in keywords if _keyword_re(kw).search(text)]
    if present:
        return _bad(f"forbidden keywords present: {present}")
    return _ok(f"no forbidden keywords: {keywords}")


# --- number formats ---

NUMBER_PATTERNS: dict[str, re.Pattern[str]] = {
    # 24-hour clock time, 00:00 through 23:59.
    "time-24h": re.compile(r"\b(?:[01]\d|2[0-3]):[0-5]\d\b"),
    # Integer with comma thousands separators, e.g. 1,234,567.
    "thousands-int": re.compile(r"\b\d{1,3}(?:,\d{3})+\b"),
    # Percentage value, e.g. 45% or 3.5%.
    "percentage": re.compile(r"\b\d+(?:\.\d+)?%"),
}


@_register("number-format", ParamSpec("pattern", str))
def _number_format(text: str, pattern: str) -> ConstraintVerdict:
    try:
        regex = NUMBER_PATTERNS[pattern]
    except KeyError:
        raise VerifierParamError(
            f"pattern must be one of {sorted(NUMBER_PATTERNS)}, got {pattern!r}"
        ) from None
    match = regex.search(text)
    if match:
        return _ok(f"pattern {pattern} matched {match.group(0)!r}")
    return _bad(f"no {pattern} match found")


# --- external command escape hatch ---

class ExternalVerifierError(VerifierError):
    pass


_command_locks: dict[str, threading.Lock] = {}
_command_locks_guard = threading.Lock()


def _lock_for(command_key: str) -> threading.Lock:
    with _command_locks_guard:
        return _command_locks.setdefault(command_key, threading.Lock())


def run_external_verifier(
    command: list[str],
    response: str,
    *,
    whitelist: set[str] | frozenset[str],
    timeout_s: float = 10.0,
    reentrant: bool = False,
) -> ConstraintVerdict:
    """Run a whitelisted external command as a checker.

    The response is piped to the child's stdin; exit status 0 means pass.
    A single real number on stdout overrides the soft score. Timeouts and
    spawn failures are reported as failing verdicts, not exceptions.
    """
    if not command:
        raise ExternalVerifierError("empty command")
    if command[0] not in whitelist:
        raise ExternalVerifierError(f"command {command[0]!r} not whitelisted")

    def _run() -> ConstraintVerdict:
        try:
            proc = subprocess.run(
                command,
                input=response.encode("utf-8"),
                capture_output=True,
                timeout=timeout_s,
            )
        except subprocess.TimeoutExpired:
            return _bad(f"timeout after {timeout_s}s")
        except OSError as exc:
            return _bad(f"spawn failure: {exc}")
        passed = proc.returncode == 0
        soft = 1.0 if passed else 0.0
        stdout = proc.stdout.decode("utf-8", errors="replace").strip()
        if stdout:
            first_line = stdout.splitlines()[0]
            try:
                soft = max(0.0, min(1.0, float(first_line)))
            except ValueError:
                pass
        if passed and soft != 1.0:
            # Verdict invariant wins over the override on a pass.
            soft = 1.0
        detail = f"exit {proc.returncode}"
        return ConstraintVerdict(passed, soft, detail)

    if reentrant:
        return _run()
    with _lock_for(command[0]):
        return _run()
