"""
Sistemas de demonstração para avaliação.

Osciladores de Van der Pol e FitzHugh-Nagumo, oscilador linear amortecido,
crescimento logístico, pêndulo (não polinomial) e Lorenz (caótico). Sistemas
do utilizador podem ser dados como manifests polinomiais.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from core.exceptions import OdeInfConfigError
from core.io_utils import load_json
from odeinf.ode_prior import PolynomialVectorField, evaluate_field

FieldFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DemoSystem:
    name: str
    dimension: int
    field: FieldFn
    x0: Tuple[float, ...]
    t_span: Tuple[float, float]
    heldout_ics: Tuple[Tuple[float, ...], ...] = ()
    chaotic: bool = False
    polynomial: Optional[PolynomialVectorField] = None
    description: str = ""

    @property
    def initial_condition(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=np.float64)


def _poly_system(name: str, coefficients: List[Dict[Tuple[int, ...], float]], x0, t_span,
                 heldout, chaotic: bool = False, description: str = "") -> DemoSystem:
    vf = PolynomialVectorField.from_coefficients(coefficients)
    return DemoSystem(name=name, dimension=vf.dimension, field=lambda x, vf=vf: evaluate_field(vf, x),
                      x0=tuple(x0), t_span=tuple(t_span), heldout_ics=tuple(tuple(ic) for ic in heldout),
                      chaotic=chaotic, polynomial=vf, description=description)


def van_der_pol() -> DemoSystem:
    # dx1 = x2 ; dx2 = -x1 + 0.5 x2 (1 - x1^2)
    return _poly_system(
        "van_der_pol",
        [{(0, 1): 1.0}, {(1, 0): -1.0, (0, 1): 0.5, (2, 1): -0.5}],
        x0=(-1.5, 2.5), t_span=(0.0, 14.0), heldout=[(1.0, 0.5), (-0.5, -1.0)],
        description="Van der Pol, mu = 0.5")


def fitzhugh_nagumo() -> DemoSystem:
    # dx1 = 3 (x1 - x1^3/3 + x2) ; dx2 = (0.2 - 3 x1 - 0.2 x2) / 3
    return _poly_system(
        "fitzhugh_nagumo",
        [{(1, 0): 3.0, (3, 0): -1.0, (0, 1): 3.0},
         {(0, 0): 0.2 / 3.0, (1, 0): -1.0, (0, 1): -0.2 / 3.0}],
        x0=(-1.0, 1.0), t_span=(0.0, 5.0), heldout=[(1.5, -0.5), (0.5, 0.5)],
        description="FitzHugh-Nagumo")


def damped_oscillator() -> DemoSystem:
    return _poly_system(
        "damped_oscillator",
        [{(1, 0): -0.1, (0, 1): 2.0}, {(1, 0): -2.0, (0, 1): -0.1}],
        x0=(2.0, 0.0), t_span=(0.0, 10.0), heldout=[(0.0, 1.5), (-1.0, -1.0)],
        description="oscilador linear amortecido")


def logistic() -> DemoSystem:
    return _poly_system(
        "logistic",
        [{(1,): 1.0, (2,): -1.0}],
        x0=(0.1,), t_span=(0.0, 10.0), heldout=[(0.5,), (1.5,)],
        description="crescimento logístico")


def pendulum() -> DemoSystem:
    def fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.stack([x[..., 1], -np.sin(x[..., 0])], axis=-1)
    return DemoSystem(name="pendulum", dimension=2, field=fn, x0=(1.0, 0.0), t_span=(0.0, 10.0),
                      heldout_ics=((0.5, 0.5), (-1.5, 0.0)), description="pêndulo sem atrito")


def lorenz() -> DemoSystem:
    beta = 8.0 / 3.0
    return _poly_system(
        "lorenz",
        [{(1, 0, 0): -10.0, (0, 1, 0): 10.0},
         {(1, 0, 0): 28.0, (0, 1, 0): -1.0, (1, 0, 1): -1.0},
         {(1, 1, 0): 1.0, (0, 0, 1): -beta}],
        x0=(1.0, 1.0, 1.0), t_span=(0.0, 5.0), heldout=[(-1.0, 2.0, 20.0)], chaotic=True,
        description="Lorenz (caótico)")


_FACTORIES: Dict[str, Callable[[], DemoSystem]] = {
    "van_der_pol": van_der_pol,
    "fitzhugh_nagumo": fitzhugh_nagumo,
    "damped_oscillator": damped_oscillator,
    "logistic": logistic,
    "pendulum": pendulum,
    "lorenz": lorenz,
}


def available_systems() -> List[str]:
    return sorted(_FACTORIES)


def get_system(name: str) -> DemoSystem:
    if name not in _FACTORIES:
        raise OdeInfConfigError(f"sistema desconhecido '{name}' (disponíveis: {available_systems()})")
    return _FACTORIES[name]()


def demo_systems(include_chaotic: bool = True) -> List[DemoSystem]:
    systems = [get_system(n) for n in _FACTORIES]
    return [s for s in systems if include_chaotic or not s.chaotic]


def system_from_manifest(data: Dict[str, Any]) -> DemoSystem:
    """
    Sistema do utilizador: ``{"name", "vf": <manifest polinomial>, "x0",
    "t_span", "heldout_ics"?, "chaotic"?}``.
    """
    try:
        vf = PolynomialVectorField.from_manifest(data["vf"])
        x0 = tuple(float(v) for v in data["x0"])
        t_span = tuple(float(v) for v in data["t_span"])
    except (KeyError, TypeError, ValueError) as e:
        raise OdeInfConfigError(f"manifest de sistema inválido: {e}") from e
    if len(x0) != vf.dimension or len(t_span) != 2 or not t_span[1] > t_span[0]:
        raise OdeInfConfigError(f"sistema '{data.get('name')}': x0 ou t_span inválidos")
    heldout = tuple(tuple(float(v) for v in ic) for ic in data.get("heldout_ics", []))
    return DemoSystem(name=str(data.get("name", "user_system")), dimension=vf.dimension,
                      field=lambda x, vf=vf: evaluate_field(vf, x), x0=x0, t_span=t_span,
                      heldout_ics=heldout, chaotic=bool(data.get("chaotic", False)), polynomial=vf)


def load_systems(path: Path) -> List[DemoSystem]:
    data = load_json(Path(path))
    entries = data["systems"] if isinstance(data, dict) and "systems" in data else data
    return [system_from_manifest(entry) for entry in entries]
