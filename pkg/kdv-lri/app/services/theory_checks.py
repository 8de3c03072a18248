"""
Theory Checks - numerical verification of the phase-function and time-averaging lemmas
Phase classification of frequency tuples, time averages and their defect, exhaustive and sampled scans
"""

import math
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from app.config import settings
from app.services.error_management import CostGuardError, InvalidParameterError
from app.services.performance_manager import run_parallel

logger = structlog.get_logger(__name__)

EXPONENT_SMALL = 15.0 / 7.0
EXPONENT_PAIR = 5.0 / 7.0

# Explicit constants of the averaging lemma:
#   |eta| <= 3 min{|a/b|, |b/a|, tau|a|, tau|b|},  |eta| <= 14 / (tau |a+b|),  |eta| <= osc * osc
AVERAGE_LEMMA_CONSTANTS: Dict[str, float] = {"r1": 3.0, "r2": 14.0, "r0": 1.0 + 1e-6}
OSCILLATION_FLOOR = 1e-6

# Sampled extremes keyed by (seed, samples), default ranges and chunk
AVERAGE_LEMMA_FIXTURES: Dict[Tuple[int, int], Dict[str, float]] = {
    (42, 1_000_000): {
        "r1": 1.2732309074992048,
        "r2": 3.1729550276483054,
        "r0": 0.2499999586650728,
    },
}
CALIBRATION_MARGIN = 1.25

# Limits enforced by the scan: calibrated extremes with margin, never above the explicit constants
AVERAGE_LEMMA_BOUNDS: Dict[str, float] = {
    name: min(CALIBRATION_MARGIN * value, AVERAGE_LEMMA_CONSTANTS[name])
    for name, value in AVERAGE_LEMMA_FIXTURES[(42, 1_000_000)].items()
}

# Exact scan extremes, c_small = 1/8: (fraction, witness) per report, None for an empty region
PHASE_LEMMA_FIXTURES: Dict[int, Dict[str, Optional[Tuple[str, Tuple[int, int, int]]]]] = {
    40: {
        "phase": ("3", (-2, 0, 1)),
        "gamma1": ("23/21", (-23, -21, 22)),
        "gamma21": None,
    },
}


class GammaClass(str, Enum):
    """Phase regions of a frequency tuple"""
    GAMMA0 = "Gamma0"
    GAMMA1 = "Gamma1"
    GAMMA21 = "Gamma21"
    GAMMA22 = "Gamma22"


class PhaseTuple(BaseModel):
    """Frequencies k1, k2, k3 with k = k1+k2+k3 and the derived phases"""

    model_config = ConfigDict(frozen=True)

    k1: int
    k2: int
    k3: int
    k: int
    phi: int
    phi1: int
    phi2: int
    k_max: int


class GammaTag(BaseModel):
    """Classification of a tuple for a given c_small"""

    model_config = ConfigDict(frozen=True)

    region: GammaClass
    c_small: float


class ScanReport(BaseModel):
    """Extremal value found by a scan and the tuple or sample attaining it"""

    lemma: str
    bound: Optional[int] = None
    extremal_value: Optional[float] = None
    extremal_fraction: Optional[str] = None
    witness_tuple: Optional[List[float]] = None
    count: int = 0
    samples: Optional[int] = None
    seed: Optional[int] = None
    limit: Optional[float] = None
    passed: bool = True


def phase_tuple(k1: int, k2: int, k3: int) -> PhaseTuple:
    """Phases in exact integer arithmetic"""

    k1, k2, k3 = int(k1), int(k2), int(k3)
    k = k1 + k2 + k3
    phi1 = 3 * k1 * k2 * (k1 + k2)
    phi2 = 3 * k * k3 * (k1 + k2)
    return PhaseTuple(
        k1=k1, k2=k2, k3=k3, k=k,
        phi=k ** 3 - k1 ** 3 - k2 ** 3 - k3 ** 3,
        phi1=phi1,
        phi2=phi2,
        k_max=max(abs(k), abs(k1), abs(k2), abs(k3)),
    )


def classify(t: PhaseTuple, c_small: float = None) -> GammaTag:
    """Gamma0 / Gamma1 / Gamma21 / Gamma22 membership"""

    c_small = settings.DEFAULT_C_SMALL if c_small is None else c_small
    if not 0.0 < c_small < 1.0:
        raise InvalidParameterError(f"c_small must lie in (0, 1), got {c_small}")

    if (t.k1 + t.k2) * (t.k1 + t.k3) * (t.k2 + t.k3) == 0:
        region = GammaClass.GAMMA0
    elif 4 * abs(t.phi) < t.k_max ** 2:
        region = GammaClass.GAMMA1
    elif abs(t.phi) < c_small * float(t.k_max) ** EXPONENT_SMALL:
        region = GammaClass.GAMMA21
    else:
        region = GammaClass.GAMMA22
    return GammaTag(region=region, c_small=c_small)


def m_tau(alpha, tau: float):
    """Time average (1/tau) int_0^tau exp(i s alpha) ds = (exp(i tau alpha) - 1) / (i tau alpha)

    Written as exp(ix/2) sinc(x/2pi) with x = tau alpha, which is exactly 1 at alpha = 0 and
    has no cancellation for small |x|.
    """
    x = tau * np.asarray(alpha, dtype=np.float64)
    value = np.exp(0.5j * x) * np.sinc(x / (2.0 * np.pi))
    return complex(value) if value.ndim == 0 else value


def oscillation(alpha, tau: float):
    """||exp(i s alpha)||_osc on [0, tau] = 2 sin(min(tau |alpha|, pi) / 2)"""
    x = np.minimum(tau * np.abs(np.asarray(alpha, dtype=np.float64)), np.pi)
    value = 2.0 * np.sin(0.5 * x)
    return float(value) if value.ndim == 0 else value


def average_defect(alpha, beta, tau: float):
    """M(exp(i s (alpha+beta))) - M(exp(i s alpha)) M(exp(i s beta)), exactly 0 when alpha or beta is 0"""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    # canonical factor order keeps the defect bit-symmetric in (alpha, beta)
    lo, hi = np.minimum(alpha, beta), np.maximum(alpha, beta)
    value = m_tau(alpha + beta, tau) - m_tau(lo, tau) * m_tau(hi, tau)
    value = np.where((alpha == 0) | (beta == 0), 0j, value)
    return complex(value) if value.ndim == 0 else value


def eta_values(tau: float, phi, phi1, phi2):
    """Vectorized eta = m(-phi) - m(-phi1) m(-phi2)"""
    phi1 = np.asarray(phi1, dtype=np.float64)
    phi2 = np.asarray(phi2, dtype=np.float64)
    lo, hi = np.minimum(phi1, phi2), np.maximum(phi1, phi2)
    value = m_tau(-np.asarray(phi, dtype=np.float64), tau) - m_tau(-lo, tau) * m_tau(-hi, tau)
    return np.where((phi1 == 0) | (phi2 == 0), 0j, value)


def eta(tau: float, t: PhaseTuple) -> complex:
    """Average defect of the tuple; exactly 0 when phi1 or phi2 vanishes"""
    if t.phi1 == 0 or t.phi2 == 0:
        return 0j
    lo, hi = sorted((t.phi1, t.phi2))
    return m_tau(-t.phi, tau) - m_tau(-lo, tau) * m_tau(-hi, tau)


def _slab(k1: int, bound: int) -> Tuple[np.ndarray, ...]:
    """All (k2, k3) for fixed k1, flattened in lexicographic order"""
    axis = np.arange(-bound, bound + 1, dtype=np.int64)
    k2, k3 = np.meshgrid(axis, axis, indexing="ij")
    k2 = k2.ravel()
    k3 = k3.ravel()
    k1 = np.full_like(k2, k1)
    k = k1 + k2 + k3
    k_max = np.maximum.reduce([np.abs(k), np.abs(k1), np.abs(k2), np.abs(k3)])
    s12, s13, s23 = k1 + k2, k1 + k3, k2 + k3
    return k1, k2, k3, k, k_max, s12, s13, s23


def _phase_slab(task: Tuple[int, int, float]) -> Dict[str, Optional[tuple]]:
    """Per-k1 extremes; first occurrence in lexicographic order wins ties"""
    k1_value, bound, c_small = task
    k1, k2, k3, k, k_max, s12, s13, s23 = _slab(k1_value, bound)
    phi = 3 * s12 * s13 * s23
    in_gamma = phi != 0

    results: Dict[str, Optional[tuple]] = {"phase": None, "gamma1": None, "gamma21": None, "gamma21_count": 0}

    if np.any(in_gamma):
        ratio = np.where(in_gamma, np.abs(phi) / np.maximum(k_max, 1), np.inf)
        i = int(np.argmin(ratio))
        results["phase"] = (float(ratio[i]), int(abs(phi[i])), int(k_max[i]), (k1_value, int(k2[i]), int(k3[i])))

    gamma1 = in_gamma & (4 * np.abs(phi) < k_max * k_max)
    if np.any(gamma1):
        smallest = np.minimum.reduce([np.abs(k), np.abs(k1), np.abs(k2), np.abs(k3)])
        ratio = np.where(gamma1, k_max / np.maximum(smallest, 1), -np.inf)
        i = int(np.argmax(ratio))
        results["gamma1"] = (float(ratio[i]), int(k_max[i]), int(smallest[i]), (k1_value, int(k2[i]), int(k3[i])))

    gamma21 = (in_gamma & ~gamma1
               & (np.abs(phi) < c_small * np.power(k_max.astype(np.float64), EXPONENT_SMALL)))
    count = int(np.count_nonzero(gamma21))
    results["gamma21_count"] = count
    if count:
        pair = np.minimum.reduce([np.abs(s12), np.abs(s13), np.abs(s23)])
        ratio = np.where(gamma21, pair / np.power(k_max.astype(np.float64), EXPONENT_PAIR), -np.inf)
        i = int(np.argmax(ratio))
        results["gamma21"] = (float(ratio[i]), int(pair[i]), int(k_max[i]), (k1_value, int(k2[i]), int(k3[i])))

    return results


def scan_phase_lemma(bound: int, c_small: float = None, jobs: int = 1) -> Dict[str, ScanReport]:
    """Exhaustive scan over |k_j| <= bound of the three phase-lemma quantities

    phase:   min over Gamma of |phi| / k_max (lemma: >= 1)
    gamma1:  max over Gamma1 of k_max / min |k_j| (lemma: comparable, <= 6)
    gamma21: max over Gamma21 of min pairwise |k_j + k_h| / k_max^{5/7} (lemma: bounded)
    """

    c_small = settings.DEFAULT_C_SMALL if c_small is None else c_small
    if bound < 1:
        raise InvalidParameterError(f"scan bound must be >= 1, got {bound}")
    if bound > settings.SCAN_MAX_BOUND:
        raise CostGuardError(f"scan bound {bound} exceeds SCAN_MAX_BOUND={settings.SCAN_MAX_BOUND}")

    logger.info("Scanning phase lemma", bound=bound, c_small=c_small, jobs=jobs)

    slabs = run_parallel(_phase_slab, [(k1, bound, c_small) for k1 in range(-bound, bound + 1)], jobs)

    phase_best = None
    gamma1_best = None
    gamma21_best = None
    gamma21_count = 0
    for slab in slabs:
        if slab["phase"] is not None and (phase_best is None or slab["phase"][0] < phase_best[0]):
            phase_best = slab["phase"]
        if slab["gamma1"] is not None and (gamma1_best is None or slab["gamma1"][0] > gamma1_best[0]):
            gamma1_best = slab["gamma1"]
        if slab["gamma21"] is not None and (gamma21_best is None or slab["gamma21"][0] > gamma21_best[0]):
            gamma21_best = slab["gamma21"]
        gamma21_count += slab["gamma21_count"]

    reports = {
        "phase": ScanReport(lemma="phase_lower_bound", bound=bound, limit=1.0),
        "gamma1": ScanReport(lemma="gamma1_comparability", bound=bound, limit=6.0),
        "gamma21": ScanReport(lemma="gamma21_small_pair", bound=bound, count=gamma21_count),
    }

    if phase_best is not None:
        value, numerator, denominator, witness = phase_best
        reports["phase"] = reports["phase"].model_copy(update={
            "extremal_value": value,
            "extremal_fraction": str(Fraction(numerator, denominator)),
            "witness_tuple": list(witness),
            "passed": value >= 1.0,
        })
    if gamma1_best is not None:
        value, numerator, denominator, witness = gamma1_best
        reports["gamma1"] = reports["gamma1"].model_copy(update={
            "extremal_value": value,
            "extremal_fraction": str(Fraction(numerator, denominator)),
            "witness_tuple": list(witness),
            "passed": value <= 6.0,
        })
    if gamma21_best is not None:
        value, _, _, witness = gamma21_best
        reports["gamma21"] = reports["gamma21"].model_copy(update={
            "extremal_value": value,
            "witness_tuple": list(witness),
            "passed": math.isfinite(value),
        })

    logger.info("Phase lemma scan finished",
                min_phase_ratio=reports["phase"].extremal_value,
                gamma1_ratio=reports["gamma1"].extremal_value,
                gamma21_count=gamma21_count)
    return reports


def check_phase_factorization(bound: int) -> ScanReport:
    """phi = phi1 + phi2 = 3 (k1+k2)(k1+k3)(k2+k3) on every tuple with |k_j| <= bound"""

    if bound > settings.SCAN_MAX_BOUND:
        raise CostGuardError(f"scan bound {bound} exceeds SCAN_MAX_BOUND={settings.SCAN_MAX_BOUND}")

    violations = 0
    for k1_value in range(-bound, bound + 1):
        k1, k2, k3, k, _, s12, s13, s23 = _slab(k1_value, bound)
        phi = k ** 3 - k1 ** 3 - k2 ** 3 - k3 ** 3
        phi1 = 3 * k1 * k2 * s12
        phi2 = 3 * k * k3 * s12
        violations += int(np.count_nonzero((phi != phi1 + phi2) | (phi != 3 * s12 * s13 * s23)))

    return ScanReport(lemma="phase_factorization", bound=bound, count=violations,
                      extremal_value=float(violations), passed=violations == 0)


def check_eta_vanishing(bound: int, taus: Sequence[float]) -> ScanReport:
    """eta is exactly zero on every tuple with phi1 * phi2 == 0"""

    if bound > settings.SCAN_MAX_BOUND:
        raise CostGuardError(f"scan bound {bound} exceeds SCAN_MAX_BOUND={settings.SCAN_MAX_BOUND}")

    violations = 0
    checked = 0
    for k1_value in range(-bound, bound + 1):
        k1, k2, k3, k, _, s12, _, _ = _slab(k1_value, bound)
        phi1 = 3 * k1 * k2 * s12
        phi2 = 3 * k * k3 * s12
        degenerate = (phi1 == 0) | (phi2 == 0)
        phi = (phi1 + phi2)[degenerate]
        for tau in taus:
            values = eta_values(tau, phi, phi1[degenerate], phi2[degenerate])
            violations += int(np.count_nonzero(values != 0))
            checked += int(values.size)

    return ScanReport(lemma="eta_vanishing", bound=bound, count=checked,
                      extremal_value=float(violations), passed=violations == 0)


def _log_uniform(rng: np.random.Generator, low: float, high: float, size: int) -> np.ndarray:
    return np.power(10.0, rng.uniform(math.log10(low), math.log10(high), size))


def scan_average_lemma(samples: int = 1_000_000, seed: int = None,
                       alpha_range: Tuple[float, float] = (1e-3, 1e6),
                       tau_range: Tuple[float, float] = (1e-6, 0.5),
                       chunk: int = 100_000) -> Dict[str, ScanReport]:
    """Random sampling of the averaging lemma ratios

    r1 = |eta| / min{|a/b|, |b/a|, tau|a|, tau|b|}
    r2 = |eta| tau |a+b|
    r0 = |eta| / (osc(a) osc(b)), on samples with osc(a) osc(b) >= OSCILLATION_FLOOR
    """

    seed = settings.DEFAULT_SEED if seed is None else seed
    if samples < 1:
        raise InvalidParameterError(f"samples must be positive, got {samples}")

    rng = np.random.default_rng(seed)
    best = {name: (-math.inf, None) for name in ("r1", "r2", "r0")}

    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        alpha = _log_uniform(rng, *alpha_range, n) * rng.choice([-1.0, 1.0], n)
        beta = _log_uniform(rng, *alpha_range, n) * rng.choice([-1.0, 1.0], n)
        tau = _log_uniform(rng, *tau_range, n)
        defect = np.abs(average_defect(alpha, beta, tau))

        smallest = np.minimum.reduce([
            np.abs(alpha / beta), np.abs(beta / alpha), tau * np.abs(alpha), tau * np.abs(beta),
        ])
        ratios = {
            "r1": defect / smallest,
            "r2": defect * tau * np.abs(alpha + beta),
        }
        osc = oscillation(alpha, tau) * oscillation(beta, tau)
        ratios["r0"] = np.where(osc >= OSCILLATION_FLOOR, defect / np.maximum(osc, OSCILLATION_FLOOR), -np.inf)

        for name, values in ratios.items():
            i = int(np.argmax(values))
            if values[i] > best[name][0]:
                best[name] = (float(values[i]), [float(alpha[i]), float(beta[i]), float(tau[i])])
        done += n

    reports = {}
    for name, (value, witness) in best.items():
        limit = AVERAGE_LEMMA_BOUNDS[name]
        reports[name] = ScanReport(
            lemma=f"average_{name}",
            extremal_value=value if math.isfinite(value) else None,
            witness_tuple=witness,
            samples=samples,
            seed=seed,
            limit=limit,
            passed=(not math.isfinite(value)) or value <= limit,
        )

    logger.info("Average lemma scan finished", samples=samples, seed=seed,
                r1=reports["r1"].extremal_value, r2=reports["r2"].extremal_value)
    return reports
