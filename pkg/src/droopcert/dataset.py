"""Sampled dynamic droop matrices and their JSON / CSV interchange formats."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .freqresp import F_BASE, FrequencyGrid, eval_tf, gain_phase

ENTRIES = ("m_p", "m_q", "zeta_p", "zeta_q")


@dataclass
class DroopSample:
    f_hz: float
    m_p: complex
    m_q: complex = 0j
    zeta_p: complex = 0j
    zeta_q: complex = 0j
    cond: float = 1.0
    ok: bool = True
    error: str | None = None


@dataclass
class DroopDataset:
    unit_id: str
    samples: list[DroopSample]
    s_base_va: float = 100e6
    f_base_hz: float = F_BASE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        freqs = [s.f_hz for s in self.samples]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ValueError("dataset frequencies must be strictly increasing")
        for s in self.valid_samples():
            if not all(np.isfinite(getattr(s, e)) for e in ENTRIES):
                raise ValueError(f"non-finite entry at {s.f_hz} Hz")

    def __len__(self):
        return len(self.samples)

    def valid_samples(self) -> list[DroopSample]:
        return [s for s in self.samples if s.ok]

    @property
    def f_hz(self) -> np.ndarray:
        return np.array([s.f_hz for s in self.valid_samples()])

    @property
    def m_p(self) -> np.ndarray:
        return np.array([s.m_p for s in self.valid_samples()], dtype=complex)

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(tuple(self.f_hz))

    @classmethod
    def from_tf(cls, unit_id: str, m_p, grid, m_q=None, f_base: float = F_BASE) -> "DroopDataset":
        """Exact samples of analytic transfer functions (no identification)."""
        samples = []
        for f in grid:
            samples.append(DroopSample(
                f_hz=float(f),
                m_p=complex(eval_tf(m_p, f, f_base)),
                m_q=complex(eval_tf(m_q, f, f_base)) if m_q is not None else 0j,
            ))
        return cls(unit_id=unit_id, samples=samples, f_base_hz=f_base)

    @classmethod
    def from_values(cls, unit_id: str, f_hz, m_p) -> "DroopDataset":
        return cls(unit_id, [DroopSample(float(f), complex(v)) for f, v in zip(f_hz, m_p)])

    def to_dict(self) -> dict:
        def c(z):
            return {"re": float(z.real), "im": float(z.imag)}

        samples = []
        for s in self.samples:
            row = {"f_hz": s.f_hz}
            for e in ENTRIES:
                row[e] = c(getattr(s, e))
            row["cond"] = s.cond
            if not s.ok:
                row["ok"] = False
                row["error"] = s.error
            samples.append(row)
        return {
            "unit_id": self.unit_id,
            "base": {"s_base_va": self.s_base_va, "f_base_hz": self.f_base_hz},
            "samples": samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DroopDataset":
        try:
            base = d.get("base", {})
            samples = []
            for row in d["samples"]:
                kw = {e: complex(row[e]["re"], row[e]["im"]) for e in ENTRIES if e in row}
                if "m_p" not in kw:
                    raise KeyError("m_p")
                samples.append(DroopSample(
                    f_hz=float(row["f_hz"]),
                    cond=float(row.get("cond", 1.0)),
                    ok=bool(row.get("ok", True)),
                    error=row.get("error"),
                    **kw,
                ))
            return cls(
                unit_id=str(d["unit_id"]),
                samples=samples,
                s_base_va=float(base.get("s_base_va", 100e6)),
                f_base_hz=float(base.get("f_base_hz", F_BASE)),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed droop dataset: missing {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DroopDataset":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_bode_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            header = ["f_hz"]
            for e in ENTRIES:
                header += [f"{e}_gain_db", f"{e}_phase_deg"]
            w.writerow(header)
            for s in self.valid_samples():
                row = [fmt(s.f_hz)]
                for e in ENTRIES:
                    g, p = gain_phase(getattr(s, e))
                    row += [fmt(g), fmt(p)]
                w.writerow(row)


def fmt(x: float) -> str:
    """Fixed 17-significant-digit formatting for reproducible reports."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.17g}")
    if isinstance(obj, complex):
        return {"re": _normalize(obj.real), "im": _normalize(obj.imag)}
    return obj


def dumps(obj) -> str:
    return json.dumps(_normalize(obj), indent=2, sort_keys=True)
