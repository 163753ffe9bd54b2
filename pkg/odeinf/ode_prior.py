"""
Prior de pré-treino sobre campos vetoriais polinomiais.

Cada componente f_i é um polinómio esparso de grau total <= p com coeficientes
N(0, 1). A esparsidade vem de duas máscaras binárias: uma por grau e outra por
monómio. Só os termos sobreviventes são guardados.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from core.exceptions import OdeInfConfigError, OdeInfValidationError

MonomialExponents = Tuple[int, ...]


@dataclass(frozen=True)
class PriorConfig:
    dimension: int = 1
    max_degree: int = 3
    degree_keep_prob: float = 0.5
    monomial_keep_prob: float = 0.5
    scale_range: Tuple[float, float] = (0.0, 2.0)
    coef_mean: float = 0.0
    coef_std: float = 1.0

    def validate(self) -> None:
        if self.dimension < 1:
            raise OdeInfConfigError(f"prior.dimension deve ser >= 1 (recebido {self.dimension})")
        if self.max_degree < 1:
            raise OdeInfConfigError(f"prior.max_degree deve ser >= 1 (recebido {self.max_degree})")
        for key in ("degree_keep_prob", "monomial_keep_prob"):
            prob = getattr(self, key)
            if not 0.0 < prob <= 1.0:
                raise OdeInfConfigError(f"prior.{key} deve estar em (0, 1] (recebido {prob})")
        lo, hi = self.scale_range
        if lo < 0 or hi < lo:
            raise OdeInfConfigError(f"prior.scale_range inválido: {self.scale_range}")
        if self.coef_std < 0:
            raise OdeInfConfigError("prior.coef_std deve ser >= 0")

    def with_dimension(self, dimension: int) -> "PriorConfig":
        return PriorConfig(
            dimension=dimension,
            max_degree=self.max_degree,
            degree_keep_prob=self.degree_keep_prob,
            monomial_keep_prob=self.monomial_keep_prob,
            scale_range=self.scale_range,
            coef_mean=self.coef_mean,
            coef_std=self.coef_std,
        )


def enumerate_monomials(d: int, p: int) -> List[MonomialExponents]:
    """
    Todos os vetores de expoentes com grau total <= p, em ordem lexicográfica graduada.

    Dentro de cada grau a ordem é lexicográfica decrescente nos expoentes
    (x1^2 antes de x1*x2 antes de x2^2). O total é binomial(d + p, p).
    """
    out: List[MonomialExponents] = []
    for degree in range(p + 1):
        block = []
        for combo in combinations_with_replacement(range(d), degree):
            exps = [0] * d
            for var in combo:
                exps[var] += 1
            block.append(tuple(exps))
        block.sort(reverse=True)
        out.extend(block)
    return out


@dataclass(frozen=True)
class PolynomialComponent:
    """Um polinómio f_i: lista de (expoentes, coeficiente) sobreviventes."""
    terms: Tuple[Tuple[MonomialExponents, float], ...]

    def __post_init__(self):
        if not self.terms:
            raise OdeInfValidationError("PolynomialComponent precisa de pelo menos um termo")
        for exps, coef in self.terms:
            if not np.isfinite(coef):
                raise OdeInfValidationError(f"coeficiente não finito no termo {exps}")

    @property
    def exponent_matrix(self) -> np.ndarray:
        return np.array([exps for exps, _ in self.terms], dtype=np.int64)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([coef for _, coef in self.terms], dtype=np.float64)

    def describe(self, names: Sequence[str]) -> str:
        parts = []
        for exps, coef in self.terms:
            factors = []
            for name, e in zip(names, exps):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mono = "*".join(factors)
            parts.append(f"{coef:+.4g}" + (f"*{mono}" if mono else ""))
        return " ".join(parts)


@dataclass(frozen=True)
class PolynomialVectorField:
    """Campo vetorial s * f(x) com f polinomial por componente."""
    dimension: int
    components: Tuple[PolynomialComponent, ...]
    scale: float = 1.0
    _cache: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise OdeInfValidationError(f"dimensão inválida: {self.dimension}")
        if len(self.components) != self.dimension:
            raise OdeInfValidationError(
                f"{len(self.components)} componentes para dimensão {self.dimension}")
        for comp in self.components:
            for exps, _ in comp.terms:
                if len(exps) != self.dimension:
                    raise OdeInfValidationError(f"expoentes {exps} não têm comprimento {self.dimension}")

    def _tables(self) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        if "exps" not in self._cache:
            self._cache["exps"] = [c.exponent_matrix for c in self.components]
            self._cache["coefs"] = [c.coefficients for c in self.components]
        return self._cache["exps"], self._cache["coefs"]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return evaluate_field(self, x)

    def describe(self) -> str:
        names = [f"x{i + 1}" for i in range(self.dimension)]
        rows = [f"dx{i + 1}/dt = {self.scale:.4g} * ({c.describe(names)})"
                for i, c in enumerate(self.components)]
        return "\n".join(rows)

    def to_manifest(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "scale": float(self.scale),
            "components": [
                [[list(exps), float(coef)] for exps, coef in comp.terms]
                for comp in self.components
            ],
        }

    @classmethod
    def from_manifest(cls, data: Dict[str, Any]) -> "PolynomialVectorField":
        comps = tuple(
            PolynomialComponent(tuple((tuple(int(e) for e in exps), float(coef)) for exps, coef in comp))
            for comp in data["components"]
        )
        return cls(dimension=int(data["dimension"]), components=comps, scale=float(data["scale"]))

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[Dict[MonomialExponents, float]],
                          scale: float = 1.0) -> "PolynomialVectorField":
        """Constrói um campo a partir de dicionários {expoentes: coeficiente} por componente."""
        d = len(coefficients)
        comps = tuple(PolynomialComponent(tuple((tuple(k), float(v)) for k, v in comp.items()))
                      for comp in coefficients)
        return cls(dimension=d, components=comps, scale=scale)


def evaluate_field(vf: PolynomialVectorField, x: np.ndarray) -> np.ndarray:
    """
    Avalia s * f(x). Aceita ``x`` com forma (..., d) e devolve a mesma forma.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (vf.dimension,):
        raise OdeInfValidationError(
            f"estado com forma {x.shape} incompatível com dimensão {vf.dimension}")
    exps_list, coefs_list = vf._tables()
    out = np.empty(x.shape, dtype=np.float64)
    for i, (exps, coefs) in enumerate(zip(exps_list, coefs_list)):
        # (..., T, d) -> produto sobre d -> (..., T)
        monomials = np.prod(x[..., None, :] ** exps, axis=-1)
        out[..., i] = monomials @ coefs
    return vf.scale * out


def _sample_mask(rng: np.random.Generator, monomials: Sequence[MonomialExponents],
                 config: PriorConfig) -> np.ndarray:
    degrees = np.array([sum(m) for m in monomials])
    while True:
        degree_mask = rng.random(config.max_degree + 1) < config.degree_keep_prob
        monomial_mask = rng.random(len(monomials)) < config.monomial_keep_prob
        keep = degree_mask[degrees] & monomial_mask
        if keep.any():
            return keep


def sample_vector_field(config: PriorConfig, rng: np.random.Generator) -> PolynomialVectorField:
    """
    Amostra um campo do prior. As máscaras são reamostradas até cada
    componente reter pelo menos um monómio.
    """
    monomials = enumerate_monomials(config.dimension, config.max_degree)
    components = []
    for _ in range(config.dimension):
        keep = _sample_mask(rng, monomials, config)
        kept = [m for m, k in zip(monomials, keep) if k]
        coefs = rng.normal(config.coef_mean, config.coef_std, size=len(kept))
        components.append(PolynomialComponent(tuple((m, float(c)) for m, c in zip(kept, coefs))))
    lo, hi = config.scale_range
    scale = float(rng.uniform(lo, hi))
    return PolynomialVectorField(dimension=config.dimension, components=tuple(components), scale=scale)
