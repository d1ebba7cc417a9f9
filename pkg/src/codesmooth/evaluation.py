"""Dataset ingestion, dataset-level metrics, a naive rename attack, and
report emission.

Datasets and adversarial-pair files are JSON lines. Metrics cover clean
accuracy, attack success rate over adversarial pairs, the normalized
certified radius, and the abstention rate. Reports serialize bit-stably:
keys sorted, floats rounded to six digits, rows ordered by record id.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .adapters import ClassifierAdapter, ClassifyItem, classify_batch
from .certification import (
    Certificate,
    _certify_with_tally,
    certificate_row,
    row_to_certificate,
    smoothed_predict,
)
from .code_model import (
    LANGUAGES,
    CodeSnippet,
    keywords,
    rename_identifier,
    snippet_from_source,
)
from .errors import DataError, PerturbationError
from .perturbation import (
    ALL_OPS,
    DEFAULT_ALPHABET,
    SmoothingConfig,
    edit_budget,
    perturb_identifier,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetRecord:
    """One labeled snippet; identifiers optionally pins the table names."""

    id: str
    code: str
    language: str
    label: int
    identifiers: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class AdvPair:
    """An adversarial variant linked to its original record."""

    id: str
    orig_id: str
    code: str
    label: int
    language: Optional[str] = None


@dataclass(frozen=True)
class PerSampleRow:
    """Per-record report row; score is the ground-truth vote share."""

    id: str
    predicted: int
    truth: int
    radius: int
    h: int
    score: Optional[float]


@dataclass(frozen=True)
class EvalReport:
    """Dataset-level metrics plus per-record rows.

    mean_radius averages non-abstained certificates only; rates are None
    when their inputs were not supplied.
    """

    acc: Optional[float]
    asr: Optional[float]
    ncrr: Optional[float]
    mean_radius: Optional[float]
    abstain_rate: Optional[float]
    per_sample: tuple[PerSampleRow, ...]
    n_samples: Optional[int] = None


def snippet_from_record(record: DatasetRecord) -> CodeSnippet:
    """Lex a record, honoring its explicit identifier list when present."""
    return snippet_from_source(
        record.code, record.language, identifier_names=record.identifiers
    )


def _parse_lines(path: str) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _field(path: str, lineno: int, obj: Mapping, key: str, kind: type):
    if key not in obj:
        raise DataError(f"{path}:{lineno}: missing field {key!r}")
    value = obj[key]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise DataError(f"{path}:{lineno}: field {key!r} must be {kind.__name__}")
    return value


def load_dataset(path: str) -> list[DatasetRecord]:
    """Read DatasetRecord JSON lines; rejects duplicates and bad fields."""
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    for lineno, obj in _parse_lines(path):
        rid = _field(path, lineno, obj, "id", str)
        code = _field(path, lineno, obj, "code", str)
        language = _field(path, lineno, obj, "language", str)
        label = _field(path, lineno, obj, "label", int)
        if language not in LANGUAGES:
            raise DataError(f"{path}:{lineno}: unsupported language {language!r}")
        if rid in seen:
            raise DataError(f"{path}:{lineno}: duplicate id {rid!r}")
        seen.add(rid)
        identifiers = None
        if "identifiers" in obj and obj["identifiers"] is not None:
            raw = obj["identifiers"]
            if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
                raise DataError(f"{path}:{lineno}: identifiers must be a list of strings")
            identifiers = tuple(raw)
        records.append(DatasetRecord(rid, code, language, label, identifiers))
    return records


def load_adv(path: str) -> list[AdvPair]:
    """Read AdvPair JSON lines; language may come later from the original."""
    pairs: list[AdvPair] = []
    seen: set[str] = set()
    for lineno, obj in _parse_lines(path):
        pid = _field(path, lineno, obj, "id", str)
        orig_id = _field(path, lineno, obj, "orig_id", str)
        code = _field(path, lineno, obj, "code", str)
        label = _field(path, lineno, obj, "label", int)
        if pid in seen:
            raise DataError(f"{path}:{lineno}: duplicate id {pid!r}")
        seen.add(pid)
        language = None
        if "language" in obj and obj["language"] is not None:
            language = _field(path, lineno, obj, "language", str)
            if language not in LANGUAGES:
                raise DataError(f"{path}:{lineno}: unsupported language {language!r}")
        pairs.append(AdvPair(pid, orig_id, code, label, language))
    return pairs


def resolve_adv_languages(
    pairs: Sequence[AdvPair], dataset: Sequence[DatasetRecord]
) -> list[AdvPair]:
    """Fill in each pair's language from its original record."""
    by_id = {record.id: record for record in dataset}
    resolved = []
    for pair in pairs:
        if pair.language is not None:
            resolved.append(pair)
            continue
        orig = by_id.get(pair.orig_id)
        if orig is None:
            raise DataError(f"adversarial pair {pair.id!r} references unknown record {pair.orig_id!r}")
        resolved.append(replace(pair, language=orig.language))
    return resolved


def accuracy(predict_fn: Callable[[DatasetRecord], int], dataset: Sequence[DatasetRecord]) -> float:
    """Fraction of records whose prediction equals the ground truth."""
    if not dataset:
        raise DataError("cannot compute accuracy of an empty dataset")
    return sum(1 for r in dataset if predict_fn(r) == r.label) / len(dataset)


def attack_success_rate(
    predict_fn: Callable[[AdvPair], int], adv_pairs: Sequence[AdvPair]
) -> float:
    """Fraction of adversarial pairs that are misclassified."""
    if not adv_pairs:
        raise DataError("cannot compute ASR over an empty pair list")
    return sum(1 for p in adv_pairs if predict_fn(p) != p.label) / len(adv_pairs)


def ncrr(certificates: Iterable[Certificate]) -> float:
    """Mean of radius / h over certificates.

    Abstentions contribute zero; certificates with h = 0 are excluded
    and counted in a warning because their ratio is undefined.
    """
    certs = list(certificates)
    if not certs:
        raise DataError("cannot compute NCRR without certificates")
    usable = [c for c in certs if c.h > 0]
    skipped = len(certs) - len(usable)
    if skipped:
        logger.warning("excluded %d certificates with h = 0 from NCRR", skipped)
    if not usable:
        raise DataError("all certificates have h = 0")
    return sum(0.0 if c.abstained else c.radius / c.h for c in usable) / len(usable)


def mean_radius(certificates: Iterable[Certificate]) -> float:
    """Mean certified radius over non-abstained certificates (0.0 if none)."""
    radii = [c.radius for c in certificates if not c.abstained]
    if not radii:
        return 0.0
    return sum(radii) / len(radii)


def abstain_rate(certificates: Sequence[Certificate]) -> float:
    if not certificates:
        raise DataError("cannot compute abstain rate without certificates")
    return sum(1 for c in certificates if c.abstained) / len(certificates)


def _attack_rng(seed: int, record_id: str) -> random.Random:
    digest = hashlib.sha256(
        seed.to_bytes(8, "big", signed=True) + record_id.encode("utf-8")
    ).digest()
    return random.Random(int.from_bytes(digest, "big"))


def naive_random_rename_attack(
    record: DatasetRecord,
    adapter: ClassifierAdapter,
    max_changes: int = 3,
    max_queries: int = 50,
    seed: int = 0,
) -> Optional[AdvPair]:
    """Greedy random-rename attack used as desk-scale test plumbing.

    Walks random valid renames of up to max_changes identifiers, querying
    the classifier after each step, and returns the first variant whose
    prediction differs from the record label. Returns None when the
    original is already misclassified, when there is nothing to rename,
    or when the query budget runs out.
    """
    if max_changes <= 0 or max_queries <= 0:
        return None
    snippet = snippet_from_record(record)
    h = snippet.identifier_count
    if h == 0:
        return None
    rng = _attack_rng(seed, record.id)
    queries = 0

    def predict(snip: CodeSnippet) -> int:
        nonlocal queries
        queries += 1
        result = classify_batch(
            adapter, [ClassifyItem(record.id, snip.source, record.language)]
        )
        return result[0].label

    if predict(snippet) != record.label:
        return None
    lang_keywords = keywords(record.language)
    current = snippet
    changed: set[int] = set()
    stalled = 0
    for _ in range(max_queries * 8):
        if queries >= max_queries:
            break
        pool = sorted(changed) if len(changed) >= max_changes else range(h)
        entry_index = rng.choice(list(pool))
        name = current.identifiers.entries[entry_index].name
        avoid = (
            set(current.identifiers.names())
            | {t.text for t in current.tokens if t.kind == "identifier"}
            | lang_keywords
            | set(current.denylist)
        )
        try:
            new_name = perturb_identifier(
                name, edit_budget(len(name), 0.6), ALL_OPS, DEFAULT_ALPHABET, avoid, rng
            )
        except PerturbationError:
            stalled += 1
            continue
        candidate = rename_identifier(current, name, new_name)
        if predict(candidate) != record.label:
            return AdvPair(
                id=f"{record.id}-adv",
                orig_id=record.id,
                code=candidate.source,
                label=record.label,
                language=record.language,
            )
        current = candidate
        changed.add(entry_index)
        stalled += 1
        if stalled >= 4 * h and len(changed) >= max_changes:
            current = snippet
            changed = set()
            stalled = 0
    return None


def certify_dataset_detailed(
    records: Sequence[DatasetRecord],
    config: SmoothingConfig,
    adapter: ClassifierAdapter,
    workers: int = 1,
    allow_unsound_edit_certificates: bool = False,
) -> list[tuple[DatasetRecord, Certificate, Optional[float]]]:
    """Certify every record; rows come back sorted by record id.

    The third element is the ground-truth vote share from the selection
    tally, the per-record diagnostic score.
    """

    def one(record: DatasetRecord) -> tuple[DatasetRecord, Certificate, Optional[float]]:
        snippet = snippet_from_record(record)
        cert, tally = _certify_with_tally(
            snippet, record.label, config, adapter, allow_unsound_edit_certificates
        )
        score = tally.counts.get(record.label, 0) / tally.total
        return record, cert, score

    if workers <= 1:
        results = [one(record) for record in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(one, records))
    return sorted(results, key=lambda row: row[0].id)


def certify_dataset(
    records: Sequence[DatasetRecord],
    config: SmoothingConfig,
    adapter: ClassifierAdapter,
    workers: int = 1,
    allow_unsound_edit_certificates: bool = False,
) -> list[dict]:
    """Serializable certificate rows for a dataset, sorted by record id."""
    detailed = certify_dataset_detailed(
        records, config, adapter, workers, allow_unsound_edit_certificates
    )
    return [certificate_row(record.id, cert) for record, cert, _ in detailed]


def _round6(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(value, 6)


def build_report(
    certificates: Sequence[tuple[str, Certificate, Optional[float]]],
    asr: Optional[float] = None,
    n_samples: Optional[int] = None,
) -> EvalReport:
    """Assemble an EvalReport from (record id, certificate, score) triples.

    Clean accuracy equals the fraction of certificates whose prediction
    matched the ground truth, which is exactly one minus the abstention
    rate.
    """
    if not certificates:
        raise DataError("cannot build a report without certificates")
    certs = [cert for _, cert, _ in certificates]
    rows = tuple(
        PerSampleRow(
            id=rid,
            predicted=cert.predicted_label,
            truth=cert.ground_truth_label,
            radius=-1 if cert.abstained else cert.radius,
            h=cert.h,
            score=score,
        )
        for rid, cert, score in sorted(certificates, key=lambda row: row[0])
    )
    return EvalReport(
        acc=sum(1 for c in certs if not c.abstained) / len(certs),
        asr=asr,
        ncrr=ncrr(certs),
        mean_radius=mean_radius(certs),
        abstain_rate=abstain_rate(certs),
        per_sample=rows,
        n_samples=n_samples,
    )


def evaluate_dataset(
    records: Sequence[DatasetRecord],
    config: SmoothingConfig,
    adapter: ClassifierAdapter,
    adv_pairs: Optional[Sequence[AdvPair]] = None,
    certificate_rows: Optional[Sequence[Mapping]] = None,
    workers: int = 1,
) -> EvalReport:
    """Full evaluation: certificates (computed or preloaded), ACC, ASR."""
    if certificate_rows is None:
        detailed = certify_dataset_detailed(records, config, adapter, workers)
        triples = [(record.id, cert, score) for record, cert, score in detailed]
    else:
        triples = []
        for row in certificate_rows:
            rid, cert = row_to_certificate(row)
            score = cert.n_c / cert.n if not cert.abstained and cert.n else None
            triples.append((rid, cert, score))
        triples.sort(key=lambda t: t[0])
    asr = None
    if adv_pairs is not None:
        resolved = resolve_adv_languages(adv_pairs, records)

        def smoothed(pair: AdvPair) -> int:
            snippet = snippet_from_source(pair.code, pair.language)
            label, _ = smoothed_predict(snippet, config, adapter)
            return label

        asr = attack_success_rate(smoothed, resolved)
    return build_report(triples, asr=asr, n_samples=config.n_samples)


def report_to_dict(report: EvalReport) -> dict:
    """Plain-dict form of a report with floats rounded to six digits."""
    return {
        "acc": _round6(report.acc),
        "asr": _round6(report.asr),
        "ncrr": _round6(report.ncrr),
        "mean_radius": _round6(report.mean_radius),
        "abstain_rate": _round6(report.abstain_rate),
        "n_samples": report.n_samples,
        "per_sample": [
            {
                "id": row.id,
                "predicted": row.predicted,
                "truth": row.truth,
                "radius": row.radius,
                "h": row.h,
                "score": _round6(row.score),
            }
            for row in report.per_sample
        ],
    }


def emit_report(report: EvalReport, path: str, format: Optional[str] = None) -> None:
    """Write a report as JSON or CSV with bit-stable serialization."""
    if format is None:
        if path.endswith(".json"):
            format = "json"
        elif path.endswith(".csv"):
            format = "csv"
        else:
            raise DataError(f"cannot infer report format from {path!r}")
    if format == "json":
        text = json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"
    elif format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["id", "predicted", "truth", "radius", "h", "score"])
        for row in report.per_sample:
            score = "" if row.score is None else f"{row.score:.6f}"
            writer.writerow([row.id, row.predicted, row.truth, row.radius, row.h, score])
        text = buffer.getvalue()
    else:
        raise DataError(f"unknown report format {format!r}; expected json or csv")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def write_certificates(rows: Sequence[Mapping], path: str) -> None:
    """Write certificate rows as JSON lines."""
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(dict(row)) + "\n")


def load_certificates(path: str) -> list[dict]:
    """Read certificate rows, validating the expected fields."""
    rows = []
    for lineno, obj in _parse_lines(path):
        try:
            row_to_certificate(obj)
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: bad certificate row: {exc}") from None
        rows.append(obj)
    return rows
