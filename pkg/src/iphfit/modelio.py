"""Serialization of fitted models and whole-model evaluation.

The params document is a UTF-8 JSON text with version tag "iph-params/1":

    {
      "version": "iph-params/1",
      "transform": {"family": "pareto", "beta": null},
      "shift": 0.0,
      "markov": true,
      "pi": [...],
      "T": [[...], ...],
      "exit": [...]            # only for non-Markov representations
    }

Reals are written with 17 significant digits, so a load followed by a
save is byte-stable and evaluation round-trips bitwise.  Loading re-runs
full representation validation; schema problems raise
ModelDocumentError naming the offending field path.
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy.integrate import quad

from .errors import ModelDocumentError
from .families import (
    NegLogAffine,
    ParetoExp,
    Power,
    ShiftedPower,
    ShiftedTransform,
    TransformedPH,
    ep_mean,
    mw_moment,
    sp_mean,
    tph_new,
)
from .phcore import ph_new, ph_pdf

__all__ = [
    "model_to_doc",
    "doc_to_model",
    "save_model",
    "load_model",
    "model_mean",
    "dumps_doc",
]

VERSION = "iph-params/1"


# ---------------------------------------------------------------------------
# document construction
# ---------------------------------------------------------------------------

def _transform_doc(tr) -> dict:
    if isinstance(tr, ParetoExp):
        return {"family": "pareto", "beta": tr.beta}
    if isinstance(tr, Power):
        return {"family": "weibull", "beta": tr.beta}
    if isinstance(tr, NegLogAffine):
        return {"family": "gumbel", "mu": tr.mu, "sigma": tr.sigma}
    if isinstance(tr, ShiftedPower):
        return {"family": "gev", "mu": tr.mu, "sigma": tr.sigma, "xi": tr.xi}
    raise ModelDocumentError(f"transform: cannot serialize {type(tr).__name__}")


def model_to_doc(model: TransformedPH) -> dict:
    tr = model.transform
    shift = 0.0
    if isinstance(tr, ShiftedTransform):
        shift = float(tr.shift)
        tr = tr.inner
    doc = {
        "version": VERSION,
        "transform": _transform_doc(tr),
        "shift": shift,
        "markov": bool(model.base.markov),
        "pi": [float(v) for v in model.base.pi],
        "T": [[float(v) for v in row] for row in model.base.T],
    }
    if not model.base.markov:
        doc["exit"] = [float(v) for v in model.base.exit]
    return doc


def _fmt(x) -> str:
    """JSON fragment for one value; floats carry 17 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if not math.isfinite(v):
            raise ModelDocumentError(f"cannot serialize non-finite real {v}")
        return format(v, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, dict):
        items = (f"{json.dumps(k)}: {_fmt(v)}" for k, v in x.items())
        return "{" + ", ".join(items) + "}"
    raise ModelDocumentError(f"cannot serialize value of type {type(x).__name__}")


def dumps_doc(doc: dict) -> str:
    """Pretty one-key-per-line rendering with exact float text."""
    lines = [f'  {json.dumps(k)}: {_fmt(v)}' for k, v in doc.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_model(model: TransformedPH, path) -> dict:
    doc = model_to_doc(model)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_doc(doc))
    return doc


# ---------------------------------------------------------------------------
# document loading
# ---------------------------------------------------------------------------

def _need(doc: dict, key: str, where: str = ""):
    if key not in doc:
        raise ModelDocumentError(f"{where}{key}: missing")
    return doc[key]


def _real(value, where: str, positive=False, nonzero=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelDocumentError(f"{where}: expected a real number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ModelDocumentError(f"{where}: must be finite, got {v}")
    if positive and not (v > 0):
        raise ModelDocumentError(f"{where}: must be positive, got {v}")
    if nonzero and v == 0:
        raise ModelDocumentError(f"{where}: must be nonzero")
    return v


def _vector(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ModelDocumentError(f"{where}: expected a nonempty array")
    return np.array([_real(v, f"{where}[{i}]") for i, v in enumerate(value)])


def _load_transform(tdoc) -> object:
    if not isinstance(tdoc, dict):
        raise ModelDocumentError("transform: expected an object")
    fam = _need(tdoc, "family", "transform.")
    if fam == "pareto":
        beta = tdoc.get("beta")
        return ParetoExp(None if beta is None else _real(beta, "transform.beta", positive=True))
    if fam == "weibull":
        return Power(_real(_need(tdoc, "beta", "transform."), "transform.beta", positive=True))
    if fam == "gumbel":
        return NegLogAffine(
            _real(_need(tdoc, "mu", "transform."), "transform.mu"),
            _real(_need(tdoc, "sigma", "transform."), "transform.sigma", positive=True),
        )
    if fam == "gev":
        return ShiftedPower(
            _real(_need(tdoc, "mu", "transform."), "transform.mu"),
            _real(_need(tdoc, "sigma", "transform."), "transform.sigma", positive=True),
            _real(_need(tdoc, "xi", "transform."), "transform.xi", nonzero=True),
        )
    raise ModelDocumentError(f"transform.family: unknown family {fam!r}")


def doc_to_model(doc: dict) -> TransformedPH:
    if not isinstance(doc, dict):
        raise ModelDocumentError("document root: expected an object")
    version = _need(doc, "version")
    if version != VERSION:
        raise ModelDocumentError(f"version: expected {VERSION!r}, got {version!r}")
    transform = _load_transform(_need(doc, "transform"))
    shift = _real(_need(doc, "shift"), "shift")
    markov = _need(doc, "markov")
    if not isinstance(markov, bool):
        raise ModelDocumentError(f"markov: expected true/false, got {markov!r}")
    pi = _vector(_need(doc, "pi"), "pi")
    Traw = _need(doc, "T")
    if not isinstance(Traw, list) or not Traw:
        raise ModelDocumentError("T: expected a nonempty array of rows")
    rows = [_vector(row, f"T[{i}]") for i, row in enumerate(Traw)]
    if any(r.size != len(rows) for r in rows):
        raise ModelDocumentError("T: must be square")
    T = np.vstack(rows)
    try:
        if markov:
            base = ph_new(pi, T, markov=True)
        else:
            exit_vec = _vector(_need(doc, "exit"), "exit")
            base = ph_new(pi, T, markov=False, exit=exit_vec)
        composed = transform if shift == 0.0 else ShiftedTransform(transform, shift)
        return tph_new(base, composed)
    except ModelDocumentError:
        raise
    except Exception as exc:
        raise ModelDocumentError(f"representation: {exc}") from exc


def load_model(path) -> TransformedPH:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelDocumentError(f"document: not valid JSON ({exc})") from exc
    return doc_to_model(doc)


# ---------------------------------------------------------------------------
# whole-model summaries
# ---------------------------------------------------------------------------

def model_mean(model: TransformedPH) -> float:
    """E(Y) of the composed model; +inf when the mean diverges."""
    tr = model.transform
    shift = 0.0
    inner = tr
    if isinstance(tr, ShiftedTransform):
        shift, inner = float(tr.shift), tr.inner
    base = model.base
    if isinstance(inner, ParetoExp):
        eta = float(np.max(np.linalg.eigvals(base.T).real))
        if eta >= -1.0:
            return math.inf
        c = inner.scale(model.mu)
        p = base.dim
        exp_moment = float(base.pi @ np.linalg.solve(-np.eye(p) - base.T, base.exit))
        return c * (math.exp(shift) * exp_moment - 1.0)
    if isinstance(inner, ShiftedPower) and inner.xi >= 1.0:
        return math.inf
    if shift == 0.0:
        if isinstance(inner, Power):
            return mw_moment(model, 1.0)
        if isinstance(inner, NegLogAffine):
            return ep_mean(model)
        if isinstance(inner, ShiftedPower):
            return sp_mean(model)
    val, _ = quad(
        lambda u: float(tr.from_x(u, model.mu)) * ph_pdf(base, u),
        0.0,
        model.x_cap,
        limit=400,
    )
    return float(val)
