"""
Self-contained property suite: estimators against brute-force oracles, loss gradients
against finite differences, decomposition residual behaviour, the IMMD/HSIC bound and
the texture generator spectrum.

Every check draws its own random batches from a seeded generator and reports the
measured value next to its tolerance.
"""
import logging
import math
import zlib
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from ctda.discrepancy import (alpha_ratio, cmmd_sq, cmmd_sq_expectation_form, dcmmd_sq, hsic,
                              hsic_closed_form, immd_sq, mixture_expectation_check)
from ctda.kernels import EmbeddingBatch, gram, label_gram, LabelKernel
from ctda.losses import cross_entropy, empirical_expectation_form, nt_xent, sup_contrastive
from ctda.synthgen import GeneratorConfig, sample_texture, spectral_slope
from ctda.theory import decompose, lemma2_bound_check, solve_gamma
from ctda.trainer.model import FeatureMap, LinearHead

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass
class CheckResult:
    name: str
    passed: bool
    tolerance: float | None
    measured: float | None
    detail: str = ""

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["passed"] = bool(self.passed)
        for key in ("tolerance", "measured"):
            if data[key] is not None:
                data[key] = float(data[key])
        return data


Check = Callable[[np.random.Generator, "VerifySettings"], CheckResult]
CHECKS: Dict[str, Check] = {}


@dataclass(frozen=True)
class VerifySettings:
    trials: int = 100
    batch_per_cell: int = 8


def check(name: str):
    def register(fn: Check) -> Check:
        CHECKS[name] = fn
        return fn
    return register


# ---------------------------------------------------------------------------
# Random batches and oracles
# ---------------------------------------------------------------------------

def sample_balanced_batch(rng: np.random.Generator, n_classes: int = 2, per_cell: int = 8, dim: int = 16,
                          class_spread: float = 0.0, domain_shift: float = 0.0) -> EmbeddingBatch:
    """
    Unit-norm embeddings with ``per_cell`` samples in every (class, domain) cell.

    With zero spread and shift the directions are isotropic; otherwise each class gets a
    random center scaled by ``class_spread`` and domain 1 is offset by ``domain_shift``.
    """
    centers = rng.standard_normal((n_classes, dim)) * class_spread
    shift = rng.standard_normal(dim) * domain_shift
    rows, classes, domains = [], [], []
    for c in range(n_classes):
        for d in (0, 1):
            rows.append(centers[c] + d * shift + rng.standard_normal((per_cell, dim)) / math.sqrt(dim))
            classes += [c] * per_cell
            domains += [d] * per_cell
    return EmbeddingBatch.from_arrays(np.vstack(rows), classes, domains, n_classes, normalize=True)


def sample_unit_rows(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    z = rng.standard_normal((n, m))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def naive_nt_xent(z: np.ndarray, pairing: Sequence[int], tau: float) -> float:
    n = len(z)
    total = 0.0
    for i in range(n):
        numerator = math.exp(float(np.dot(z[i], z[pairing[i]])) / tau)
        denominator = sum(math.exp(float(np.dot(z[i], z[a])) / tau) for a in range(n) if a != i)
        total += math.log(numerator / denominator)
    return -total / n


def naive_sup_contrastive(z: np.ndarray, labels: Sequence[int], tau: float) -> float:
    n = len(z)
    total = 0.0
    for i in range(n):
        positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
        denominator = sum(math.exp(float(np.dot(z[i], z[a])) / tau) for a in range(n) if a != i)
        inner = sum(math.log(math.exp(float(np.dot(z[i], z[p])) / tau) / denominator) for p in positives)
        total += inner / len(positives)
    return -total / n


def _mean_vector(rows: List[np.ndarray]) -> np.ndarray:
    acc = np.zeros_like(rows[0])
    for row in rows:
        acc = acc + row
    return acc / len(rows)


def _cells(batch: EmbeddingBatch):
    cells: Dict[tuple, List[np.ndarray]] = {}
    pooled: Dict[int, List[np.ndarray]] = {}
    for row, c, d in zip(batch.z, batch.class_labels, batch.domain_labels):
        cells.setdefault((int(c), int(d)), []).append(row)
        pooled.setdefault(int(c), []).append(row)
    return cells, pooled


def brute_cmmd_sq(batch: EmbeddingBatch) -> float:
    cells, pooled = _cells(batch)
    n = batch.size
    total = 0.0
    for c, rows in pooled.items():
        diff = _mean_vector(cells[(c, 0)]) - _mean_vector(cells[(c, 1)])
        total += len(rows) / n * sum(v * v for v in diff)
    return total


def brute_dcmmd_sq(batch: EmbeddingBatch) -> float:
    cells, pooled = _cells(batch)
    n = batch.size
    priors = {c: len(rows) / n for c, rows in pooled.items()}
    norm = 1.0 - sum(p * p for p in priors.values())
    total = 0.0
    for c1 in priors:
        for c2 in priors:
            if c1 == c2:
                continue
            for d1 in (0, 1):
                for d2 in (0, 1):
                    diff = _mean_vector(cells[(c1, d2)]) - _mean_vector(cells[(c2, d1)])
                    total += priors[c1] * priors[c2] / norm * 0.25 * sum(v * v for v in diff)
    return total


def brute_immd_sq(batch: EmbeddingBatch) -> float:
    _, pooled = _cells(batch)
    n = batch.size
    total = 0.0
    for c1, rows1 in pooled.items():
        for c2, rows2 in pooled.items():
            diff = _mean_vector(rows1) - _mean_vector(rows2)
            total += len(rows1) / n * len(rows2) / n * sum(v * v for v in diff)
    return total


def brute_decomposition_terms(batch: EmbeddingBatch) -> Dict[str, float]:
    """Terms A, B, C recomputed pair by pair."""
    k = batch.z @ batch.z.T
    n = batch.size
    a_rows, c_rows = [], []
    for i in range(n):
        others = [k[i, l] for l in range(n) if l != i]
        mean = sum(others) / len(others)
        a_rows.append(mean)
        c_rows.append(sum((v - mean) ** 2 for v in others) / len(others))

    term_b = 0.0
    for c in batch.present_classes():
        prior = np.sum(batch.class_labels == c) / n
        for d in (0, 1):
            idx = [i for i in range(n) if batch.class_labels[i] == c and batch.domain_labels[i] == d]
            pairs = [k[i, j] for i in idx for j in idx if i != j]
            term_b += prior * sum(pairs) / len(pairs)
    return {"term_a": sum(a_rows) / n, "term_b": term_b, "term_c": sum(c_rows) / n}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def finite_difference(fn: Callable[[], float], param: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``fn`` with respect to every entry of ``param`` (perturbed in place)."""
    grad = np.zeros_like(param)
    flat = param.reshape(-1)
    out = grad.reshape(-1)
    for idx in range(flat.size):
        saved = flat[idx]
        flat[idx] = saved + h
        plus = fn()
        flat[idx] = saved - h
        minus = fn()
        flat[idx] = saved
        out[idx] = (plus - minus) / (2 * h)
    return grad


def random_pairing(rng: np.random.Generator, n: int) -> np.ndarray:
    order = rng.permutation(n)
    pairing = np.empty(n, dtype=np.int64)
    pairing[order[0::2]] = order[1::2]
    pairing[order[1::2]] = order[0::2]
    return pairing


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

@check("loss_oracle_nt_xent")
def _loss_oracle_nt_xent(rng, settings):
    worst = 0.0
    for _ in range(settings.trials):
        n = 2 * int(rng.integers(1, 9))
        z = sample_unit_rows(rng, n, int(rng.integers(2, 9)))
        tau = float(rng.uniform(0.1, 1.0))
        pairing = random_pairing(rng, n)
        worst = max(worst, abs(nt_xent(z, pairing, tau).value - naive_nt_xent(z, pairing, tau)))
    return CheckResult("loss_oracle_nt_xent", worst <= 1e-12, 1e-12, worst)


@check("loss_oracle_sup_contrastive")
def _loss_oracle_sup_contrastive(rng, settings):
    worst = 0.0
    for _ in range(settings.trials):
        n_classes = int(rng.integers(1, 4))
        per_class = int(rng.integers(2, 16 // n_classes + 1))
        labels = np.repeat(np.arange(n_classes), per_class)
        z = sample_unit_rows(rng, len(labels), int(rng.integers(2, 9)))
        tau = float(rng.uniform(0.1, 1.0))
        measured = abs(sup_contrastive(z, tau, labels=labels).value - naive_sup_contrastive(z, labels, tau))
        worst = max(worst, measured)
    return CheckResult("loss_oracle_sup_contrastive", worst <= 1e-12, 1e-12, worst)


@check("gradient_losses")
def _gradient_losses(rng, settings):
    worst = 0.0
    for _ in range(max(settings.trials // 2, 1)):
        n, m = 8, 4
        z = sample_unit_rows(rng, n, m)
        tau = float(rng.uniform(0.2, 1.0))
        pairing = random_pairing(rng, n)
        labels = np.repeat([0, 1], n // 2)

        worst = max(worst, relative_error(
            nt_xent(z, pairing, tau).grad_z,
            finite_difference(lambda: nt_xent(z, pairing, tau).value, z),
        ))
        worst = max(worst, relative_error(
            sup_contrastive(z, tau, labels=labels).grad_z,
            finite_difference(lambda: sup_contrastive(z, tau, labels=labels).value, z),
        ))
        logits = rng.standard_normal((5, 3))
        targets = rng.integers(0, 3, 5)
        worst = max(worst, relative_error(
            cross_entropy(logits, targets).grad_z,
            finite_difference(lambda: cross_entropy(logits, targets).value, logits),
        ))
    return CheckResult("gradient_losses", worst < 1e-4, 1e-4, worst, "central differences, h=1e-5")


def end_to_end_loss(feature_map: FeatureMap, head: LinearHead, inputs: np.ndarray, labels: np.ndarray,
                    tau: float) -> float:
    """Supervised contrastive loss on the embeddings plus cross-entropy of the head."""
    z = feature_map.forward(inputs).z
    return sup_contrastive(z, tau, labels=labels).value + cross_entropy(head.logits(z), labels).value


def end_to_end_gradients(feature_map: FeatureMap, head: LinearHead, inputs: np.ndarray,
                         labels: np.ndarray, tau: float) -> Dict[str, np.ndarray]:
    cache = feature_map.forward(inputs)
    contrastive = sup_contrastive(cache.z, tau, labels=labels)
    ce = cross_entropy(head.logits(cache.z), labels)
    head_grads, grad_z = head.backward(cache.z, ce.grad_z)
    grads = feature_map.backward(cache, contrastive.grad_z + grad_z)
    grads.update(head_grads)
    return grads


@check("gradient_end_to_end")
def _gradient_end_to_end(rng, settings):
    worst = 0.0
    for _ in range(max(settings.trials // 20, 1)):
        feature_map = FeatureMap.init(16, 8, 4, rng)
        head = LinearHead.init(4, 3, rng)
        head.weight[...] = rng.standard_normal(head.weight.shape)
        inputs = rng.standard_normal((12, 16))
        labels = np.repeat([0, 1, 2], 4)
        tau = 0.5

        analytic = end_to_end_gradients(feature_map, head, inputs, labels, tau)
        params = dict(feature_map.parameters, **head.parameters)
        for name, param in params.items():
            numeric = finite_difference(lambda: end_to_end_loss(feature_map, head, inputs, labels, tau), param)
            worst = max(worst, relative_error(analytic[name], numeric))
    return CheckResult("gradient_end_to_end", worst < 1e-3, 1e-3, worst, "12-sample batch, every parameter")


@check("estimator_oracles")
def _estimator_oracles(rng, settings):
    worst = 0.0
    for _ in range(max(settings.trials // 5, 1)):
        n_classes = int(rng.integers(2, 5))
        # uneven cells so the prior weighting is exercised
        classes = np.concatenate([np.arange(n_classes)] * 2 + [rng.integers(0, n_classes, 32)])
        domains = np.concatenate([np.zeros(n_classes), np.ones(n_classes), rng.integers(0, 2, 32)])
        z = sample_unit_rows(rng, len(classes), 6)
        batch = EmbeddingBatch(z, classes, domains, n_classes)
        worst = max(
            worst,
            abs(cmmd_sq(batch) - brute_cmmd_sq(batch)),
            abs(cmmd_sq(batch) - cmmd_sq_expectation_form(batch)),
            abs(dcmmd_sq(batch) - brute_dcmmd_sq(batch)),
            abs(immd_sq(batch) - brute_immd_sq(batch)),
        )
    return CheckResult("estimator_oracles", worst <= 1e-10, 1e-10, worst)


@check("decomposition_identity")
def _decomposition_identity(rng, settings):
    worst = 0.0
    for _ in range(max(settings.trials // 10, 1)):
        batch = sample_balanced_batch(rng, 2, settings.batch_per_cell // 2 + 2, 8, class_spread=0.5)
        tau = float(rng.uniform(0.2, 2.0))
        record = decompose(batch, tau)
        terms = brute_decomposition_terms(batch)
        cmmd_quarter = cmmd_sq_expectation_form(batch, exclude_self_pairs=True) / 4.0
        rhs = (cmmd_quarter + terms["term_a"] - terms["term_b"] / 2.0 + terms["term_c"] / (2.0 * tau)
               + tau * math.log(batch.size - 1))
        worst = max(
            worst,
            abs(record.term_a - terms["term_a"]),
            abs(record.term_b - terms["term_b"]),
            abs(record.term_c - terms["term_c"]),
            abs(record.residual - (record.loss - rhs)),
        )
    return CheckResult("decomposition_identity", worst <= 1e-12, 1e-12, worst,
                       "terms recomputed pair by pair; residual = tau*loss - rhs")


@check("residual_shrinkage")
def _residual_shrinkage(rng, settings):
    batches = [sample_balanced_batch(rng, 2, 12, 16) for _ in range(30)]
    means = {}
    for tau in (0.2, 0.5, 5.0):
        means[tau] = float(np.mean([abs(decompose(b, tau).residual) for b in batches]))
    passed = means[5.0] < means[0.5] < means[0.2]
    detail = ", ".join(f"tau={t:g}: {v:.3e}" for t, v in means.items())
    return CheckResult("residual_shrinkage", passed, 0.0, means[5.0] - means[0.5], detail)


@check("gamma_constant")
def _gamma_constant(rng, settings):
    worst = abs(solve_gamma(1.0).gamma - 0.25)
    for k_max in rng.uniform(1.0, 10.0, 20):
        worst = max(worst, abs(solve_gamma(float(k_max)).residual))
    return CheckResult("gamma_constant", worst < 1e-10, 1e-10, worst, "gamma(1) = 1/4 and back-substitution")


@check("lemma2_bound")
def _lemma2_bound(rng, settings):
    alpha_hat = float(np.mean([
        alpha_ratio(sample_balanced_batch(rng, 2, 16, 16, class_spread=0.7)) for _ in range(20)
    ]))
    gamma = solve_gamma(1.0).gamma
    satisfied = 0
    for _ in range(settings.trials):
        batch = sample_balanced_batch(rng, 2, 16, 16, class_spread=0.7, domain_shift=0.3)
        if lemma2_bound_check(batch, 0.5, alpha_hat=alpha_hat, gamma=gamma).satisfied_with_slack:
            satisfied += 1
    needed = math.ceil(0.95 * settings.trials)
    return CheckResult("lemma2_bound", satisfied >= needed, float(needed), float(satisfied),
                       f"alpha_hat={alpha_hat:.4f}, gamma={gamma:g}, out of {settings.trials}")


@check("loss_expectation_form")
def _loss_expectation_form(rng, settings):
    worst = 0.0
    for _ in range(max(settings.trials // 10, 1)):
        batch = sample_balanced_batch(rng, 2, 8, 8, class_spread=0.5, domain_shift=0.3)
        form = empirical_expectation_form(batch, 0.5)
        worst = max(worst, abs(form["lhs"] - form["rhs"]))
    return CheckResult("loss_expectation_form", worst < 0.05, 0.05, worst, "class-balanced batches, n=32")


@check("mixture_expectation")
def _mixture_expectation(rng, settings):
    worst = 0.0
    for _ in range(max(settings.trials // 10, 1)):
        batch = sample_balanced_batch(rng, 2, 10, 8, class_spread=0.5, domain_shift=0.3)
        mixture = mixture_expectation_check(batch, lambda a, b: a @ b.T)
        worst = max(worst, abs(mixture["lhs"] - mixture["rhs"]))
    return CheckResult("mixture_expectation", worst < 1e-10, 1e-10, worst, "kernel statistic, n=40")


@check("hsic_closed_form")
def _hsic_closed_form(rng, settings):
    worst = 0.0
    for _ in range(max(settings.trials // 10, 1)):
        batch = sample_balanced_batch(rng, 2, 16, 8, class_spread=0.7)
        kernel = LabelKernel(delta_l=batch.n_classes)
        measured = hsic(gram(batch), label_gram(batch.class_labels, kernel))
        worst = max(worst, abs(measured - hsic_closed_form(batch)))
    return CheckResult("hsic_closed_form", worst < 0.05, 0.05, worst)


@check("alpha_stability")
def _alpha_stability(rng, settings):
    ratios = [alpha_ratio(sample_balanced_batch(rng, 2, 64, 16, class_spread=0.7)) for _ in range(10)]
    cv = float(np.std(ratios) / np.mean(ratios))
    return CheckResult("alpha_stability", cv < 0.1, 0.1, cv, "coefficient of variation at n=256")


@check("generator_spectrum")
def _generator_spectrum(rng, settings):
    config = GeneratorConfig()
    worst = 0.0
    details = []
    for beta in (1.2, 1.6):
        slopes = [spectral_slope(sample_texture(config, beta, int(seed)).pixels)
                  for seed in rng.integers(0, 2 ** 32, 20)]
        error = abs(np.mean(slopes) + 2 * beta) / (2 * beta)
        details.append(f"beta={beta}: slope {np.mean(slopes):.3f}")
        worst = max(worst, error)
    return CheckResult("generator_spectrum", worst <= 0.15, 0.15, worst, "; ".join(details))


def run_checks(seed: int = 1234, trials: int = 100, batch_per_cell: int = 8,
               names: Sequence[str] | None = None) -> Dict:
    """Run the suite (or the named subset) and return the JSON-ready report."""
    settings = VerifySettings(trials=trials, batch_per_cell=batch_per_cell)
    results = []
    for name in names or CHECKS:
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        try:
            result = CHECKS[name](rng, settings)
        except Exception as e:
            result = CheckResult(name, False, None, None, f"raised {type(e).__name__}: {e}")
        logger.info(f"{'PASS' if result.passed else 'FAIL'} {name}: measured={result.measured} "
                    f"tolerance={result.tolerance}")
        results.append(result)

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "checks": [r.to_dict() for r in results],
        "passed": all(r.passed for r in results),
    }
