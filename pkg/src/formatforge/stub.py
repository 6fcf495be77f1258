"""Deterministic fake model endpoint for offline tests and dry runs.

The stub is white-box: callers hand it the structured instruction alongside
the rendered prompt, and it plants a compliant or non-compliant response
according to a seeded per-call coin. Compliant responses are built by a
small constraint solver and re-verified before they are returned, so a
"pass" really is a pass; non-compliant responses deliberately break one of
the instruction's constraints and are likewise re-verified.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any

import yaml

from . import langid
from .constraints import FormatInstruction
from .textseg import word_count
from .verifiers import verify_all


class StubSolverError(Exception):
    pass


_SENTENCE_BANK: dict[str, list[str]] = {
    "English": [
        "This is a simple answer that covers the main points of the question",
        "The idea builds on steps that anyone can follow with ease",
        "Each part of the plan stays short and clear for the reader",
        "People often share these points when they talk about the topic",
        "The approach works well because it keeps the focus on the goal",
        "Small details matter here, and the order of the steps helps a lot",
        "A short summary like this one gives the reader a quick view",
        "Good examples make the whole answer easier to remember",
    ],
    "Spanish": [
        "Esta es una respuesta sencilla que cubre los puntos principales de la pregunta",
        "La idea se basa en pasos que todos pueden seguir sin problemas",
        "Cada parte del plan es corta y clara para el lector",
        "Muchas personas comparten estos puntos cuando hablan sobre el tema",
        "El enfoque funciona bien porque mantiene la atención en el objetivo",
        "Los detalles importan y el orden de los pasos ayuda mucho",
        "Un resumen corto como este le da al lector una vista rápida",
        "Los buenos ejemplos hacen que toda la respuesta sea fácil de recordar",
    ],
    "French": [
        "Voici une réponse simple qui couvre les points essentiels de la question",
        "Cette idée repose sur des étapes que chacun peut suivre sans effort",
        "Chaque partie du plan reste courte et claire pour le lecteur",
        "Beaucoup de personnes partagent ces points quand elles parlent du sujet",
        "Cette approche fonctionne bien parce que le cap reste sur l'objectif",
        "Les détails comptent ici et l'ordre des étapes aide beaucoup",
        "Un court résumé comme celui-ci donne au lecteur une vue rapide",
        "De bons exemples rendent la réponse plus facile à retenir",
    ],
    "Chinese": [
        "这是一个简单的回答，涵盖了问题的要点",
        "这个思路基于几个容易跟随的步骤",
        "计划的每个部分都简短而且清晰",
        "许多人在谈论这个话题时会提到这些要点",
        "这个方法有效，因为它始终围绕目标",
        "细节很重要，步骤的顺序也很有帮助",
        "像这样的简短总结能让读者快速了解",
        "好的例子让整个回答更容易记住",
    ],
    "Japanese": [
        "これは質問の要点をまとめた簡単な答えです",
        "この考え方は誰でも続けられる手順に基づいています",
        "計画のそれぞれの部分は短くて分かりやすいです",
        "多くの人がこの話題についてこれらの点を挙げます",
        "この方法は目標に集中できるのでうまくいきます",
        "細かい点は大切で、手順の順番も役に立ちます",
        "このような短いまとめは読み手に早く伝わります",
        "良い例があると答え全体を覚えやすくなります",
    ],
}

# Stems appended after the required initial letter; the checker only looks
# at the first alphabetic character, so the leading word need not be real.
_LETTER_STEMS = [
    "ssorted notes from the team arrive first",
    "nswers come after a short check",
    "ctions follow the plan in order",
    "mple time remains for the final step",
    "dded detail makes the point clear",
    "fter the review, the group moves ahead",
    "gendas stay short when the goal is clear",
    "ttention to the order helps a lot",
]

_MINIMAL_STEMS = ["Plans proceed", "Steps follow", "Work continues", "Notes help"]

_FILLER_WORDS = [
    "with", "steady", "focus", "on", "the", "plan", "and", "clear",
    "intent", "for", "each", "step", "along", "this", "path",
]

_NUMBER_SAMPLES = {"time-24h": "14:30", "thousands-int": "1,234,567", "percentage": "45%"}

_CJK_TERMINAL = "。"


@dataclass
class _Needs:
    language: str = "English"
    json_out: bool = False
    yaml_out: bool = False
    word_max: int | None = None
    word_lo: int | None = None
    word_hi: int | None = None
    para_exact: int | None = None
    para_max: int | None = None
    sent_per_para_max: int | None = None
    sent_exact: int | None = None
    start_letter: str | None = None
    end_mark: str | None = None
    case: str | None = None
    voice: str | None = None
    include_kw: list[str] = field(default_factory=list)
    exclude_kw: list[str] = field(default_factory=list)
    patterns: list[str] = field(default_factory=list)


def _collect(instruction: FormatInstruction) -> _Needs:
    needs = _Needs()
    for instance in instruction.instances:
        vid, params = instance.verifier_id, instance.bound_params
        if vid == "word-count-max":
            needs.word_max = params["limit"]
        elif vid == "word-count-range":
            needs.word_lo, needs.word_hi = params["lo"], params["hi"]
        elif vid == "json-wellformed":
            needs.json_out = True
        elif vid == "yaml-wellformed":
            needs.yaml_out = True
        elif vid == "paragraph-count-exact":
            needs.para_exact = params["count"]
        elif vid == "paragraph-count-max":
            needs.para_max = params["count"]
        elif vid == "sentences-per-paragraph-max":
            needs.sent_per_para_max = params["count"]
        elif vid == "sentence-count-exact":
            needs.sent_exact = params["count"]
        elif vid == "sentence-starts-with-letter":
            needs.start_letter = params["letter"]
        elif vid == "paragraph-ends-with-punct":
            needs.end_mark = params["mark"]
        elif vid == "case-style":
            needs.case = params["style"]
        elif vid == "voice-heuristic":
            needs.voice = params["mode"]
        elif vid == "language-is":
            needs.language = params["language"]
        elif vid == "keyword-include":
            needs.include_kw.extend(params["keywords"])
        elif vid == "keyword-exclude":
            needs.exclude_kw.extend(params["keywords"])
        elif vid == "number-format":
            needs.patterns.append(params["pattern"])
    return needs


def _insertion_phrases(needs: _Needs) -> list[str]:
    phrases = []
    inserts = {
        "English": {"time-24h": ", noted at {}", "thousands-int": ", totaling {} units",
                    "percentage": ", about {} overall"},
        "Spanish": {"time-24h": ", anotado a las {}", "thousands-int": ", en total {} unidades",
                    "percentage": ", cerca del {} en conjunto"},
        "French": {"time-24h": ", noté à {}", "thousands-int": ", au total {} unités",
                   "percentage": ", environ {} au total"},
        "Chinese": {"time-24h": "，时间是 {}", "thousands-int": "，总数是 {}",
                    "percentage": "，大约是 {}"},
        "Japanese": {"time-24h": "、時刻は {}", "thousands-int": "、合計は {}",
                     "percentage": "、およそ {}"},
    }
    table = inserts[needs.language]
    for pattern in needs.patterns:
        phrases.append(table[pattern].format(_NUMBER_SAMPLES[pattern]))
    for keyword in needs.include_kw:
        phrases.append(f", covering {keyword}" if needs.language == "English" else f", {keyword}")
    return phrases


def _sentence_bodies(needs: _Needs, count: int, variant: int) -> list[str]:
    bodies: list[str] = []
    if needs.start_letter:
        letter = needs.start_letter.upper()
        stems = _LETTER_STEMS
        for i in range(count):
            bodies.append(letter + stems[(variant + i) % len(stems)])
        if needs.voice == "passive":
            bodies[min(1, count - 1)] = f"{letter}ll items were reviewed by the team"
        return bodies
    bank = _SENTENCE_BANK[needs.language]
    compact = needs.word_max is not None and needs.word_max // max(count, 1) < 8
    for i in range(count):
        if compact and needs.language == "English":
            bodies.append(_MINIMAL_STEMS[(variant + i) % len(_MINIMAL_STEMS)])
        else:
            bodies.append(bank[(variant + i) % len(bank)])
    if needs.voice == "passive":
        bodies[0] = "The plan was approved by the team"
    return bodies


def _plan_layout(needs: _Needs) -> list[int]:
    """Sentence count per paragraph satisfying the layout constraints."""
    n_para = needs.para_exact or 1
    per_cap = needs.sent_per_para_max
    if needs.sent_exact is not None:
        total = needs.sent_exact
        if per_cap is not None and total > n_para * per_cap:
            n_para = -(-total // per_cap)  # ceil
        if needs.para_max is not None and n_para > needs.para_max:
            raise StubSolverError("layout constraints jointly unsatisfiable")
    else:
        per_para = 1 if n_para > 1 else 2
        if per_cap is not None:
            per_para = min(per_para, per_cap)
        total = n_para * per_para
    if total < n_para:
        raise StubSolverError("fewer sentences than paragraphs required")
    counts = [total // n_para] * n_para
    for i in range(total % n_para):
        counts[i] += 1
    if per_cap is not None and any(c > per_cap for c in counts):
        raise StubSolverError("sentence-per-paragraph cap unsatisfiable")
    return counts


def _apply_case(text: str, style: str | None) -> str:
    if style == "all-caps":
        return text.upper()
    if style == "all-lowercase":
        return text.lower()
    if style == "title-case":
        def cap_first(match: re.Match) -> str:
            token = match.group(0)
            for i, ch in enumerate(token):
                if ch.isalpha():
                    return token[:i] + ch.upper() + token[i + 1 :]
            return token

        return re.sub(r"\S+", cap_first, text)
    return text


def _prose_response(needs: _Needs, variant: int) -> str:
    layout = _plan_layout(needs)
    total = sum(layout)
    bodies = _sentence_bodies(needs, total, variant)
    for phrase in _insertion_phrases(needs):
        bodies[0] = bodies[0] + phrase

    default_terminal = _CJK_TERMINAL if needs.language in ("Chinese", "Japanese") else "."
    paragraphs: list[str] = []
    cursor = 0
    for count in layout:
        chunk = bodies[cursor : cursor + count]
        cursor += count
        sentence_texts = []
        for i, body in enumerate(chunk):
            terminal = default_terminal
            if needs.end_mark and i == count - 1:
                terminal = needs.end_mark
            sentence_texts.append(body + terminal)
        joiner = "" if default_terminal == _CJK_TERMINAL else " "
        paragraphs.append(joiner.join(sentence_texts))
    text = "\n\n".join(paragraphs)

    if needs.word_lo is not None:
        text = _pad_words(text, needs.word_lo)
    return _apply_case(text, needs.case)


def _pad_words(text: str, target: int) -> str:
    """Grow the final sentence in place until the word count reaches target."""
    count = word_count(text)
    if count >= target:
        return text
    head, terminal = text, ""
    if head and head[-1] in ".!?" + _CJK_TERMINAL:
        head, terminal = head[:-1], head[-1]
    extra = [_FILLER_WORDS[i % len(_FILLER_WORDS)] for i in range(target - count)]
    return head + " " + " ".join(extra) + terminal


def _structured_response(needs: _Needs, variant: int) -> str:
    bank = _SENTENCE_BANK[needs.language]
    summary = bank[variant % len(bank)]
    for phrase in _insertion_phrases(needs):
        summary = summary + phrase
    payload: dict[str, Any] = {"summary": summary}
    if needs.patterns:
        payload["figures"] = [_NUMBER_SAMPLES[p] for p in needs.patterns]
    if needs.include_kw:
        payload["topics"] = list(needs.include_kw)

    def render() -> str:
        if needs.json_out:
            return json.dumps(payload, ensure_ascii=False)
        return yaml.safe_dump(payload, allow_unicode=True, sort_keys=True).rstrip("\n")

    text = render()
    if needs.word_lo is not None:
        while word_count(text) < needs.word_lo:
            payload["summary"] += " " + _FILLER_WORDS[word_count(text) % len(_FILLER_WORDS)]
            text = render()
    return text


def solve(instruction: FormatInstruction, variant: int = 0) -> str:
    """A response verifying to I=1 for the instruction, or StubSolverError."""
    needs = _collect(instruction)
    if needs.json_out or needs.yaml_out:
        text = _structured_response(needs, variant)
    else:
        text = _prose_response(needs, variant)
    report = verify_all(instruction, text)
    if report.aggregate != 1:
        failing = [
            (inst.meta_id, verdict.detail)
            for inst, verdict in zip(instruction.instances, report.per_constraint)
            if not verdict.passed
        ]
        raise StubSolverError(f"solver produced a non-compliant response: {failing}")
    return text


_NEUTRAL = _SENTENCE_BANK["English"][0] + ". " + _SENTENCE_BANK["English"][1] + "."


def _break_one(text: str, instance, needs: _Needs) -> str:
    vid, params = instance.verifier_id, instance.bound_params
    if vid == "word-count-max":
        limit = params["limit"]
        extra = " ".join(_FILLER_WORDS[i % len(_FILLER_WORDS)] for i in range(limit + 1))
        return text + " " + extra
    if vid == "word-count-range":
        hi = params["hi"]
        deficit = hi - word_count(text) + max(1, hi // 10)
        extra = " ".join(_FILLER_WORDS[i % len(_FILLER_WORDS)] for i in range(max(deficit, 1)))
        return text + " " + extra
    if vid == "json-wellformed":
        return "Sure! " + text
    if vid == "yaml-wellformed":
        return "a: b: c\n- mixed"
    if vid == "paragraph-count-exact":
        return text + "\n\nOne more block appears here."
    if vid == "paragraph-count-max":
        return text + "".join("\n\nExtra block text." for _ in range(params["count"]))
    if vid == "sentences-per-paragraph-max":
        burst = " ".join("Yes." for _ in range(params["count"] + 1))
        return text + "\n\n" + burst
    if vid == "sentence-count-exact":
        return text + " One more sentence appears."
    if vid == "sentence-starts-with-letter":
        for opener in ("Note the context first. ", "Every rule matters. "):
            if opener[0].casefold() != params["letter"].casefold():
                return opener + text
        return "Zebras differ. " + text
    if vid == "paragraph-ends-with-punct":
        return text + "\n\nThis block ends without the mark"
    if vid == "language-is":
        order = list(_SENTENCE_BANK)
        other = order[(order.index(params["language"]) + 1) % len(order)]
        bank = _SENTENCE_BANK[other]
        terminal = _CJK_TERMINAL if other in ("Chinese", "Japanese") else "."
        return (terminal + " ").join(bank[:2]) + terminal
    if vid == "keyword-include":
        return _NEUTRAL
    if vid == "keyword-exclude":
        return text + f" Note {params['keywords'][0]} here."
    if vid == "number-format":
        from .verifiers import NUMBER_PATTERNS

        return NUMBER_PATTERNS[params["pattern"]].sub("", _NEUTRAL + " " + text)
    if vid == "voice-heuristic":
        if params["mode"] == "active":
            return text + " The step was checked by the team."
        return _NEUTRAL
    if vid == "case-style":
        tails = {
            "all-caps": " lower tail words",
            "all-lowercase": " UPPER TAIL WORDS",
            "title-case": " plainly lower words",
        }
        return text + tails[params["style"]]
    raise StubSolverError(f"no breaker for verifier {vid!r}")


def violate(instruction: FormatInstruction, variant: int = 0) -> str:
    """A response verifying to I=0 for the instruction, or StubSolverError."""
    try:
        base = solve(instruction, variant)
    except StubSolverError:
        base = _NEUTRAL
    needs = _collect(instruction)
    for instance in instruction.instances:
        candidate = _break_one(base, instance, needs)
        if verify_all(instruction, candidate).aggregate == 0:
            return candidate
    raise StubSolverError(
        f"could not construct a failing response for instruction {instruction.id}"
    )


@dataclass
class StubEndpoint:
    """Seeded fake chat endpoint with a configurable compliance rate.

    ``fixed_response`` overrides generation entirely (a response template
    for tests that need one exact output).
    """

    pass_rate: float = 0.7
    seed: int = 0
    fixed_response: str | None = None

    @property
    def identity(self) -> str:
        return f"stub(pass_rate={self.pass_rate},seed={self.seed})"

    def _coin(self, prompt: str, index: int) -> float:
        digest = hashlib.sha256(f"{self.seed}|{index}|{prompt}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") / 2**64

    def complete(
        self,
        prompt: str,
        n: int = 1,
        instruction: FormatInstruction | None = None,
    ) -> list[str]:
        if self.fixed_response is not None:
            return [self.fixed_response] * n
        responses = []
        for index in range(n):
            if instruction is None:
                responses.append(_NEUTRAL)
            elif self._coin(prompt, index) < self.pass_rate:
                responses.append(solve(instruction, variant=index))
            else:
                responses.append(violate(instruction, variant=index))
        return responses

    def to_config(self) -> dict[str, Any]:
        config: dict[str, Any] = {
            "kind": "stub",
            "pass_rate": self.pass_rate,
            "seed": self.seed,
        }
        if self.fixed_response is not None:
            config["fixed_response"] = self.fixed_response
        return config

    @classmethod
    def from_config(cls, config: dict[str, Any]) -> "StubEndpoint":
        return cls(
            pass_rate=config.get("pass_rate", 0.7),
            seed=config.get("seed", 0),
            fixed_response=config.get("fixed_response"),
        )
