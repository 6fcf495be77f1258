"""Response collection: batch sampling plus wrong-demonstration retry rounds.

Round 1 draws k responses per instruction. Every later round re-samples only
the instructions that still lack a fully compliant response, prepending one
of their own failing responses as a one-shot demonstration, and draws a
single response per instruction. Verification happens as responses arrive
so the round loop knows what is solved.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Protocol

import requests

from .constraints import FormatInstruction
from .ioutils import read_jsonl, write_jsonl
from .stub import StubEndpoint
from .verifiers import ConstraintVerdict, VerificationReport, verify_all


class AuthenticationError(Exception):
    """Credential rejected; the whole run aborts."""


class TransportError(Exception):
    """Request failed after retries; recorded per record, run continues."""


@dataclass
class ResponseRecord:
    instruction_id: str
    round: int
    sample_index: int
    response: str
    demo_used: bool = False
    failed: bool = False
    report: VerificationReport | None = None

    def sort_key(self) -> tuple:
        return (self.instruction_id, self.round, self.sample_index)


def no_response_report(instruction: FormatInstruction) -> VerificationReport:
    return VerificationReport(
        tuple(
            ConstraintVerdict(False, 0.0, "no response") for _ in instruction.instances
        )
    )


@dataclass(frozen=True)
class ModelEndpoint:
    """Connection settings for an OpenAI-compatible chat endpoint."""

    base_url: str
    model: str
    credential_env: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")


class Endpoint(Protocol):
    identity: str

    def complete(
        self, prompt: str, n: int = 1, instruction: FormatInstruction | None = None
    ) -> list[str]: ...


class HttpEndpoint:
    """requests-backed client for the chat-completions wire format."""

    def __init__(self, config: ModelEndpoint, max_retries: int = 3, backoff_s: float = 0.5):
        self.config = config
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    @property
    def identity(self) -> str:
        return f"{self.config.model}@{self.config.base_url}"

    def complete(
        self, prompt: str, n: int = 1, instruction: FormatInstruction | None = None
    ) -> list[str]:
        del instruction  # only the stub is white-box
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.config.credential_env:
            key = os.environ.get(self.config.credential_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "n": n,
            "max_tokens": self.config.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    url, json=body, headers=headers, timeout=self.config.timeout_s
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise AuthenticationError(
                    f"endpoint rejected credentials (HTTP {response.status_code}); "
                    f"check ${self.config.credential_env}"
                )
            if response.status_code == 429 or response.status_code >= 500:
                last_error = TransportError(f"HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
            payload = response.json()
            texts = [choice["message"]["content"] for choice in payload["choices"]]
            if len(texts) < n:
                texts += [""] * (n - len(texts))
            return texts[:n]
        raise TransportError(f"request failed after {self.max_retries + 1} attempts: {last_error}")

    def to_config(self) -> dict[str, Any]:
        return {
            "kind": "http",
            "base_url": self.config.base_url,
            "model": self.config.model,
            "credential_env": self.config.credential_env,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "timeout_s": self.config.timeout_s,
        }


def endpoint_from_config(config: dict[str, Any]) -> Endpoint:
    kind = config.get("kind")
    if kind == "stub":
        return StubEndpoint.from_config(config)
    if kind == "http":
        fields = {k: v for k, v in config.items() if k != "kind"}
        return HttpEndpoint(ModelEndpoint(**fields))
    raise ValueError(f"unknown endpoint kind {kind!r} (want 'stub' or 'http')")


def sample_batch(
    instructions: list[FormatInstruction],
    endpoint: Endpoint,
    k: int = 4,
    max_in_flight: int = 8,
) -> list[ResponseRecord]:
    """k round-1 records per instruction, ordered by (id, round, index)."""
    if k < 1:
        raise ValueError("k must be >= 1")

    def one(instruction: FormatInstruction) -> list[ResponseRecord]:
        try:
            texts = endpoint.complete(instruction.prompt, n=k, instruction=instruction)
        except TransportError:
            return [
                ResponseRecord(instruction.id, 1, i, "", failed=True) for i in range(k)
            ]
        return [ResponseRecord(instruction.id, 1, i, texts[i]) for i in range(k)]

    with ThreadPoolExecutor(max_workers=max_in_flight) as executor:
        batches = list(executor.map(one, instructions))
    records = [record for batch in batches for record in batch]
    records.sort(key=ResponseRecord.sort_key)
    return records


DEMO_PROMPT_VERSION = 1

DEMO_PROMPT_TEMPLATE = (
    "{prompt}\n\n"
    "A previous attempt FAILED to satisfy the constraints above. "
    "Here is that failed response:\n"
    "--- BEGIN FAILED RESPONSE ---\n"
    "{wrong_response}\n"
    "--- END FAILED RESPONSE ---\n"
    "Write a new response to the original instruction that satisfies every "
    "constraint; do not repeat the mistakes of the failed response."
)


def build_demo_prompt(
    instruction: FormatInstruction,
    wrong_response: str,
    template: str = DEMO_PROMPT_TEMPLATE,
) -> str:
    """One-shot wrong-demonstration prompt (deterministic, versioned)."""
    return template.format(prompt=instruction.prompt, wrong_response=wrong_response)


@dataclass
class RoundStats:
    total_instructions: int
    rounds: list[dict[str, Any]] = field(default_factory=list)

    def add_round(self, round_no: int, attempted: int, solved_new: int, solved_total: int):
        self.rounds.append(
            {
                "round": round_no,
                "attempted": attempted,
                "solved_new": solved_new,
                "solved_cumulative": solved_total,
                "remaining": self.total_instructions - solved_total,
                "cumulative_fraction": (
                    solved_total / self.total_instructions if self.total_instructions else 0.0
                ),
            }
        )

    def as_dict(self) -> dict[str, Any]:
        return {"total_instructions": self.total_instructions, "rounds": self.rounds}


def _attach_report(record: ResponseRecord, instruction: FormatInstruction) -> None:
    if record.failed:
        record.report = no_response_report(instruction)
    else:
        record.report = verify_all(instruction, record.response)


def run_rounds(
    instructions: list[FormatInstruction],
    endpoint: Endpoint,
    k: int = 4,
    max_rounds: int = 4,
    max_in_flight: int = 8,
    demo_template: str = DEMO_PROMPT_TEMPLATE,
) -> tuple[list[ResponseRecord], RoundStats]:
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    by_id = {instruction.id: instruction for instruction in instructions}

    records = sample_batch(instructions, endpoint, k=k, max_in_flight=max_in_flight)
    for record in records:
        _attach_report(record, by_id[record.instruction_id])

    solved: set[str] = {
        r.instruction_id for r in records if r.report and r.report.aggregate == 1
    }
    stats = RoundStats(total_instructions=len(instructions))
    stats.add_round(1, len(instructions), len(solved), len(solved))

    for round_no in range(2, max_rounds + 1):
        unsolved = [i for i in instructions if i.id not in solved]
        if not unsolved:
            stats.add_round(round_no, 0, 0, len(solved))
            continue
        previous = {
            iid: sorted(
                (r for r in records if r.instruction_id == iid and r.round == round_no - 1),
                key=ResponseRecord.sort_key,
            )
            for iid in (i.id for i in unsolved)
        }

        def one(instruction: FormatInstruction) -> ResponseRecord:
            wrong = previous[instruction.id][0].response
            prompt = build_demo_prompt(instruction, wrong, template=demo_template)
            try:
                texts = endpoint.complete(prompt, n=1, instruction=instruction)
                record = ResponseRecord(
                    instruction.id, round_no, 0, texts[0], demo_used=True
                )
            except TransportError:
                record = ResponseRecord(
                    instruction.id, round_no, 0, "", demo_used=True, failed=True
                )
            _attach_report(record, instruction)
            return record

        with ThreadPoolExecutor(max_workers=max_in_flight) as executor:
            new_records = list(executor.map(one, unsolved))
        records.extend(new_records)
        newly = {
            r.instruction_id for r in new_records if r.report and r.report.aggregate == 1
        }
        solved |= newly
        stats.add_round(round_no, len(unsolved), len(newly), len(solved))

    records.sort(key=ResponseRecord.sort_key)
    return records, stats


# --- records file format ---

def write_records(path: str | Path, records: Iterable[ResponseRecord]) -> None:
    write_jsonl(
        path,
        (
            {
                "instruction_id": r.instruction_id,
                "round": r.round,
                "sample_index": r.sample_index,
                "response": r.response,
                "demo_used": r.demo_used,
                "failed": r.failed,
            }
            for r in records
        ),
    )


def read_records(path: str | Path) -> list[ResponseRecord]:
    return [
        ResponseRecord(
            instruction_id=entry["instruction_id"],
            round=entry["round"],
            sample_index=entry["sample_index"],
            response=entry["response"],
            demo_used=entry["demo_used"],
            failed=entry["failed"],
        )
        for entry in read_jsonl(path)
    ]
