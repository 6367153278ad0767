"""Experiment configuration: defaults per experiment plus INI-file overrides.

A configuration file has a single ``[experiment]`` section::

    [experiment]
    id = linear1d
    potential = harmonic        ; harmonic | lj
    values = 1, 2               ; k (harmonic) or l (lj) for atoms i = 0, 1, ... mod p
    R = 3
    p = 2
    n_list = 16384
    k_list = 2, 4, 8, 16
    amplitude = 1.0
    load_mode = exact           ; exact | sampled
    seed = 20240611
    tol = 1e-10
    out = results/linear1d

``values`` are keyed by the residue of the 1-based atom index ``i`` modulo
``p``: the first entry applies to ``i = 0 mod p``.  ``k_list`` holds numbers
of macro elements (``H = 1/K``) in 1D and numbers of nodes per side ``t`` in
2D.  ``p_list`` and ``variants`` are used by the p-study only.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

__all__ = ["ExperimentConfig", "EXPERIMENTS", "default_config", "load_config", "apply_overrides"]

EXPERIMENTS = ("linear1d", "nonlinear1d", "pstudy", "case2d-1", "case2d-2")


def _dyadic(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    potential: str = "harmonic"
    values: tuple = (1.0, 2.0)
    R: int = 3
    p: int = 2
    n_list: tuple = (2**14,)
    k_list: tuple = ()
    amplitude: float = 1.0
    load_mode: str = "exact"
    seed: int = 20240611
    tol: float = 1e-10
    out: str = ""
    p_list: tuple = (2, 4, 8, 16)
    variants: tuple = ("linear", "nonlinear")
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.id!r}; expected one of {EXPERIMENTS}")
        if self.potential not in ("harmonic", "lj"):
            raise ValueError(f"unknown potential {self.potential!r}")
        if self.load_mode not in ("exact", "sampled"):
            raise ValueError(f"unknown load mode {self.load_mode!r}")
        for n in self.n_list:
            if not _dyadic(n):
                raise ValueError(f"N must be a power of two, got {n}")
            if n % self.p:
                raise ValueError(f"p={self.p} must divide N={n}")
        for k in self.k_list:
            if k < 1 or any(n % k for n in self.n_list):
                raise ValueError(f"mesh size K={k} must divide every N in {self.n_list}")
        if self.id in ("linear1d", "nonlinear1d") and len(self.values) != self.p:
            raise ValueError(f"need {self.p} values, one per residue class, got {len(self.values)}")
        if not self.out:
            object.__setattr__(self, "out", f"results/{self.id}")

    def k_for(self, N):
        """Mesh sizes usable at lattice size ``N``."""
        return tuple(k for k in self.k_list if N % k == 0)


def _dyadic_range(lo, hi):
    out, k = [], lo
    while k <= hi:
        out.append(k)
        k *= 2
    return tuple(out)


def default_config(exp_id) -> ExperimentConfig:
    """Desk-scale defaults for each experiment."""
    if exp_id == "linear1d":
        return ExperimentConfig("linear1d", "harmonic", (1.0, 2.0), 3, 2, (2**14,),
                                _dyadic_range(2, 2**13))
    if exp_id == "nonlinear1d":
        return ExperimentConfig("nonlinear1d", "lj", (1.0, 9 / 8), 3, 2, (2**12,),
                                _dyadic_range(2, 2**11), amplitude=50.0)
    if exp_id == "pstudy":
        return ExperimentConfig("pstudy", "harmonic", (), 3, 16, (2**14,),
                                _dyadic_range(2, 2**7))
    if exp_id in ("case2d-1", "case2d-2"):
        return ExperimentConfig(exp_id, "harmonic", (), 1, 2, (2**8,), _dyadic_range(2, 2**7),
                                amplitude=10.0, tol=1e-12)
    raise ValueError(f"unknown experiment {exp_id!r}; expected one of {EXPERIMENTS}")


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


_PARSERS = {
    "potential": str,
    "values": _floats,
    "R": int,
    "p": int,
    "n_list": _ints,
    "k_list": _ints,
    "amplitude": float,
    "load_mode": str,
    "seed": int,
    "tol": float,
    "out": str,
    "p_list": _ints,
    "variants": lambda t: tuple(t.replace(",", " ").split()),
}


def apply_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Replace fields whose override is not ``None``."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg


def load_config(path, exp_id=None) -> ExperimentConfig:
    """Read an INI file; unspecified keys keep the experiment defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    if "experiment" not in parser:
        raise ValueError(f"{path}: missing [experiment] section")
    sec = parser["experiment"]
    exp_id = sec.get("id", exp_id)
    if exp_id is None:
        raise ValueError(f"{path}: experiment id not given")
    kw = {}
    for key, text in sec.items():
        if key == "id":
            continue
        if key not in _PARSERS:
            raise ValueError(f"{path}: unknown key {key!r}")
        kw[key] = _PARSERS[key](text)
    return apply_overrides(default_config(exp_id), **kw)
