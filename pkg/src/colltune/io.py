"""Profile JSON, record CSV and decision-table serialisation."""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path
from typing import Iterable, TextIO

from .estimation import ExperimentRecord, GammaRecord
from .selector import DecisionTable
from .types import (
    AlgorithmId,
    CollectiveOp,
    Extrapolation,
    GammaTable,
    HockneyParams,
    InvalidArgument,
    ModelConfig,
    PlatformProfile,
)

PROFILE_VERSION = 1
RECORD_HEADER = ("collective", "algorithm", "P", "m_bytes", "segment_bytes", "time_sec", "run_id")
GAMMA_HEADER = ("p", "repetitions", "segment_bytes", "time_sec", "run_id")


class FormatError(InvalidArgument):
    """A file does not follow its documented layout."""


# -- profiles -----------------------------------------------------------------


def profile_to_dict(profile: PlatformProfile) -> dict:
    gamma = {str(p): g for p, g in profile.gamma.entries.items()}
    gamma["extrapolation"] = profile.gamma.extrapolation.value
    cfg = profile.config
    return {
        "version": PROFILE_VERSION,
        "name": profile.name,
        "config": {
            "segment_bytes": cfg.segment_bytes,
            "eager_limit": cfg.eager_limit,
            "k_chain_fanout": cfg.k_chain_fanout,
        },
        "gamma": gamma,
        "algorithms": {
            a.value: {"alpha": p.alpha, "beta": p.beta}
            for a, p in sorted(profile.per_algorithm.items(), key=lambda kv: kv[0].rank)
        },
    }


def profile_from_dict(doc: dict) -> PlatformProfile:
    try:
        version = doc.get("version", PROFILE_VERSION)
        if version != PROFILE_VERSION:
            raise FormatError(f"unsupported profile version {version}")
        gamma_doc = dict(doc["gamma"])
        policy = Extrapolation(gamma_doc.pop("extrapolation", Extrapolation.LinearFit.value))
        gamma = GammaTable({int(p): float(g) for p, g in gamma_doc.items()}, policy)
        config = ModelConfig(**doc.get("config", {}))
        algs = {AlgorithmId(k): HockneyParams(float(v["alpha"]), float(v["beta"])) for k, v in doc["algorithms"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise FormatError(f"malformed profile document: {exc}") from None
    return PlatformProfile(algs, gamma, config, str(doc.get("name", "unnamed")))


def dumps_profile(profile: PlatformProfile) -> str:
    return json.dumps(profile_to_dict(profile), indent=2, sort_keys=False) + "\n"


def save_profile(profile: PlatformProfile, path: str | Path) -> None:
    Path(path).write_text(dumps_profile(profile))


def load_profile(path: str | Path) -> PlatformProfile:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    return profile_from_dict(doc)


def grisou_profile() -> PlatformProfile:
    """The bundled profile of the Grisou cluster."""
    text = resources.files("colltune.data").joinpath("grisou.json").read_text()
    return profile_from_dict(json.loads(text))


# -- records ------------------------------------------------------------------


def _time(t: float) -> str:
    return format(t, ".17g")


def write_records(records: Iterable[ExperimentRecord], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for r in records:
        w.writerow([r.collective.value, r.algorithm.value, r.P, r.m, r.segment_bytes, _time(r.time), r.run_id])


def dumps_records(records: Iterable[ExperimentRecord]) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def _rows(text: str, header: tuple[str, ...], what: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise FormatError(f"{what} CSV is empty")
    if tuple(reader.fieldnames) != header:
        raise FormatError(f"{what} CSV header must be {','.join(header)}; got {','.join(reader.fieldnames)}")
    return list(reader)


def read_records(text: str) -> list[ExperimentRecord]:
    out = []
    for i, row in enumerate(_rows(text, RECORD_HEADER, "record"), start=2):
        try:
            out.append(
                ExperimentRecord(
                    CollectiveOp(row["collective"]),
                    AlgorithmId(row["algorithm"]),
                    int(row["P"]),
                    int(row["m_bytes"]),
                    int(row["segment_bytes"]),
                    float(row["time_sec"]),
                    row["run_id"] or "",
                )
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"record CSV line {i}: {exc}") from None
    return out


def write_gamma_records(records: Iterable[GammaRecord], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(GAMMA_HEADER)
    for r in records:
        w.writerow([r.p, r.repetitions, r.segment_bytes, _time(r.time), r.run_id])


def dumps_gamma_records(records: Iterable[GammaRecord]) -> str:
    buf = io.StringIO()
    write_gamma_records(records, buf)
    return buf.getvalue()


def read_gamma_records(text: str) -> list[GammaRecord]:
    out = []
    for i, row in enumerate(_rows(text, GAMMA_HEADER, "gamma"), start=2):
        try:
            out.append(
                GammaRecord(
                    int(row["p"]),
                    int(row["repetitions"]),
                    int(row["segment_bytes"]),
                    float(row["time_sec"]),
                    row["run_id"] or "",
                )
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"gamma CSV line {i}: {exc}") from None
    return out


# -- decision tables ----------------------------------------------------------


def dumps_decision_table_csv(table: DecisionTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["P"] + [format(m, ".17g") for m in table.m_values])
    for P, row in zip(table.P_values, table.cells):
        w.writerow([P] + [c.value if c else "" for c in row])
    return buf.getvalue()


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"
