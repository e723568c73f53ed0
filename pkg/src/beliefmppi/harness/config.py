"""Experiment configuration and its YAML file format.

A config file groups keys into optional sections; section names are only
for readability and are flattened on load::

    mppi:   {K: 64, H: 12, N_p: 16, lambda: 0.4, sigma: 15.0}
    risk:   {beta_c: 0.9, beta_s: 0.9, lambda_r: 0.5, mu: 250}
    task:   {d_min: 2.0, sigma_p: 12.0, eps_p: 60.0, f_env_max: 80, f_grasp_max: 80}
    filter: {N_thr: 0.5, n_filter: 512}
    experiment: {T: 100, trials: 50, seed: 0, variant: cvar}
    testbed: {sigma_v: 5.0, k_contact: 100.0}
"""
from dataclasses import asdict, dataclass, field, fields, replace
import hashlib
import json

import yaml

from ..controller import CcConfig, MppiConfig
from ..system import SlotTestbed

VARIANTS = ("cvar", "cc", "neutral")

# keys that belong to the testbed rather than the experiment
_TESTBED_ALIASES = {"d_min", "eps_p", "f_env_max", "f_grasp_max"}
_RENAMES = {"lambda": "lam", "trials": "n_trials"}


@dataclass(frozen=True)
class ExperimentConfig:
    # MPPI
    K: int = 64
    H: int = 12
    N_p: int = 16
    lam: float = 0.4
    sigma: float = 15.0
    n_hold: int = 1
    # risk; beta_c=None ties the cost CVaR level to beta_s
    beta_c: float = None
    beta_s: float = 0.9
    lambda_r: float = 0.5
    mu: float = 250.0
    # baseline
    variant: str = "cvar"
    delta_h: float = 0.05
    mu_cc: float = 250.0
    cc_mean_theta: bool = False
    # belief
    sigma_p: float = 12.0
    w_jitter: float = 1.0
    n_filter: int = 512
    N_thr: float = 0.5
    # episodes
    T: int = 100
    n_trials: int = 50
    seed: int = 0
    start_height: float = 80.0
    abort_factor: float = 10.0
    smooth_window: int = 7
    smooth_degree: int = 2
    testbed: SlotTestbed = field(default_factory=SlotTestbed)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.n_trials < 1 or self.T < 1:
            raise ValueError("n_trials and T must be >= 1")
        if not 0.0 <= self.N_thr <= 1.0:
            raise ValueError("N_thr is a fraction of the particle count in [0, 1]")
        if isinstance(self.testbed, dict):
            object.__setattr__(self, "testbed", SlotTestbed.from_dict(self.testbed))
        self.mppi_config()

    @property
    def effective_beta_c(self):
        return self.beta_s if self.beta_c is None else self.beta_c

    def mppi_config(self):
        lambda_r, mu = self.lambda_r, self.mu
        if self.variant == "neutral":
            lambda_r, mu = 0.0, 0.0
        common = dict(K=self.K, H=self.H, N_p=self.N_p, lam=self.lam, Sigma=self.sigma,
                      lambda_r=lambda_r, beta_c=self.effective_beta_c, beta_s=self.beta_s,
                      mu=mu, u_max=self.testbed.u_max, n_hold=self.n_hold)
        if self.variant == "cc":
            common.update(lambda_r=0.0, mu=0.0)
            return CcConfig(**common, delta_h=self.delta_h, mu_cc=self.mu_cc,
                            mean_theta=self.cc_mean_theta)
        return MppiConfig(**common)

    def label(self):
        if self.variant == "cc":
            return f"cc_delta{self.delta_h:g}_bs{self.beta_s:g}"
        if self.variant == "neutral":
            return "neutral"
        return f"cvar_bs{self.beta_s:g}_bc{self.effective_beta_c:g}_lr{self.lambda_r:g}"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        tb = dict(d.pop("testbed", {}) or {})
        names = {f.name for f in fields(cls)}
        for key in list(d):
            if key in _TESTBED_ALIASES:
                tb[key] = d.pop(key)
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d, testbed=SlotTestbed.from_dict(tb))

    def replace(self, **changes):
        return replace(self, **changes)

    def digest(self):
        """SHA-256 of the canonical JSON form; identifies the config in output headers."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def flatten(raw):
    out = {}
    for key, value in (raw or {}).items():
        if isinstance(value, dict) and key != "testbed":
            out.update(flatten(value))
        else:
            out[_RENAMES.get(key, key)] = value
    return out


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(flatten(raw))
