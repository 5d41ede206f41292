"""Build-time constants shared by every bound and report.

The manifest is a small JSON file; ``ACDISC_CONSTANTS`` overrides its path.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from functools import lru_cache
from pathlib import Path

from .psh import default_cutoff, k_constant

DEFAULT_PATH = Path(__file__).with_name("data") / "constants.json"
ENV_VAR = "ACDISC_CONSTANTS"

# Geometric-sum factor turning |dF(z)| <= M (1-|z|)^(-1/2) into a 1/2-Hoelder bound.
HARDY_LITTLEWOOD_FACTOR = 1 + 2 / (1 - 2 ** -0.5)


def c_prime_from_k(k) -> float:
    return 0.25 * math.sqrt(2 / (9 * k))


def c_m_from_k(k, m) -> float:
    return math.sqrt(2 / (9 * k * math.exp(2 * m)))


def c_double_prime_from_c_prime(cp) -> float:
    return 2 * math.e ** 2 * math.sqrt(2) / cp


def c_tilde_effective_from(cpp) -> float:
    """Concrete half-Hoelder constant built from ``c''``.

    Along a half-disc attached by its diameter, ``rho = sum y_i^2`` gives
    ``int rho o h dtheta <= pi ||h||_inf^2`` over the free half-circle, and the
    Levi eigenvalue is at least the minimal curvature. The differential bound
    then reads ``|dh| <= c'' sqrt(pi) ||h||_inf / sqrt(lambda) (1-|a|)^-1 d^-1/2``
    with ``d`` the boundary distance. Integrating ``d^-1/2`` along dyadic
    segments gives the factor ``1 + 2/(1 - 2^-1/2)``.
    """
    return cpp * math.sqrt(math.pi) * HARDY_LITTLEWOOD_FACTOR


def build_manifest() -> dict:
    theta = default_cutoff()
    k = k_constant(theta)
    cp = c_prime_from_k(k)
    cpp = c_double_prime_from_c_prime(cp)
    return {
        "theta": theta.name,
        "k": k,
        "k_samples": 10_000,
        "c_prime": cp,
        "c_double_prime": cpp,
        "hardy_littlewood_factor": HARDY_LITTLEWOOD_FACTOR,
        "c_tilde_effective": c_tilde_effective_from(cpp),
    }


def write_manifest(path=DEFAULT_PATH) -> dict:
    data = build_manifest()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return data


def manifest_path() -> Path:
    return Path(os.environ.get(ENV_VAR, DEFAULT_PATH))


@lru_cache(maxsize=8)
def _load(path: str) -> dict:
    return json.loads(Path(path).read_text())


def load_manifest() -> dict:
    path = manifest_path()
    if not path.exists():
        return build_manifest()
    return dict(_load(str(path)))


def manifest_hash(data: dict | None = None) -> str:
    data = load_manifest() if data is None else data
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def c_m(m, manifest: dict | None = None) -> float:
    manifest = load_manifest() if manifest is None else manifest
    return c_m_from_k(manifest["k"], m)
