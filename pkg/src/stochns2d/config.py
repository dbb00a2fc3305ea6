"""Run configuration: an INI file with typed sections.

Every key has a default; unknown sections or keys are rejected, and all
numeric constraints owned by the numerical modules are re-checked by
:meth:`RunConfig.validate`.  ``RunConfig.from_ini(cfg.to_ini()) == cfg``.
"""

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .forcing import NoiseSpec, PhysicalParams, load_noise_spec, nondimensionalize
from .lattice import NormParams
from .rng import check_seed

EXPERIMENTS = ("simulate", "ensemble", "verify-conservation", "lemma1", "lemma2", "proposition",
               "theorem-ladder", "time-average", "spectrum", "picard-certify")
FORCINGS = ("shell", "exponential", "file", "physical", "none")
INITIALS = ("zero", "pair", "decaying", "saturating", "random")


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    experiment: str = "simulate"


@dataclass
class PhysicsSection:
    k_max: int = 16
    r: float = 1.5
    alpha: float = 3.5
    delta: float = 0.05
    D: float = 2.0
    forcing: str = "shell"
    R: float = 10.0
    k_force: float = 1.5
    c_gamma: float = 10.0
    noise_file: str = ""
    nu: float = 1.0
    L: float = 1.0
    Gamma0: float = 0.0
    initial: str = "zero"
    Phi0: float = 0.0
    pair: tuple[int, int] = (1, 0)
    pair_amplitude: float = 1.0


@dataclass
class NumericsSection:
    h: float = 0.05
    T: float = 1.0
    order: int = 2
    nonlinear: bool = True
    tau_mode: str = "production"
    n_substeps: int = 100
    picard_max_iter: int = 50
    picard_tol: float = 1e-13
    picard_grid: int = 64
    sample_every: int = 1


@dataclass
class MCSection:
    n_traj: int = 100
    seed: int = 0
    threads: int = 1
    chunk_size: int = 250


@dataclass
class IOSection:
    out_dir: str = ""
    checkpoint_every: int = 0
    checkpoint_format: str = "bin"


@dataclass
class ExperimentSection:
    t: float = 1.0
    D_grid: tuple[float, ...] = ()
    D2_grid: tuple[float, ...] = ()
    k: tuple[int, int] = (1, 0)
    modes: tuple[tuple[int, int], ...] = ()
    times: tuple[float, ...] = ()
    tau: float = 0.01
    B_grid: tuple[float, ...] = (1.0, 2.0, 3.0)
    n_checks: int = 0
    a_hat: float = 1.0
    levels: int = 4
    T_avg: float = 1.0
    burn_in: float = 3.0
    n_snapshots: int = 10
    spacing: float = 0.5
    alpha_tilde: float = 2.5
    k_fit: tuple[float, float] = (4.0, 20.0)
    n_fields: int = 100


SECTIONS = {"run": RunSection, "physics": PhysicsSection, "numerics": NumericsSection, "mc": MCSection,
            "io": IOSection, "experiment": ExperimentSection}


def _parse_value(text: str, tp, where: str):
    text = text.strip()
    try:
        if tp is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if tp in (int, float, str):
            return tp(text)
        args = typing.get_args(tp)
        if not text:
            return ()
        if len(args) == 2 and args[1] is Ellipsis:
            inner = args[0]
            if typing.get_origin(inner) is tuple:
                return tuple(_parse_value(part, inner, where) for part in text.split(";") if part.strip())
            return tuple(inner(part) for part in text.split(","))
        parts = text.split(",")
        if len(parts) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values")
        return tuple(a(p) for a, p in zip(args, parts))
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r}: {exc}") from None


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(_format_value(x) for x in v)
        return ", ".join(_format_value(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    mc: MCSection = field(default_factory=MCSection)
    io: IOSection = field(default_factory=IOSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    @classmethod
    def from_ini(cls, text: str, base_dir: str | Path | None = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        cfg = cls()
        for name in cp.sections():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]")
            section = getattr(cfg, name)
            hints = typing.get_type_hints(type(section))
            for key, raw in cp.items(name):
                if key not in hints:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                setattr(section, key, _parse_value(raw, hints[key], f"[{name}] {key}"))
        if base_dir is not None and cfg.physics.noise_file:
            p = Path(cfg.physics.noise_file)
            if not p.is_absolute():
                cfg.physics.noise_file = str(Path(base_dir) / p)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_ini(text, base_dir=path.parent)

    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for f in dataclasses.fields(getattr(self, name)):
                lines.append(f"{f.name} = {_format_value(getattr(getattr(self, name), f.name))}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def result_key(self) -> dict:
        """Everything that can change results: drops output location and scheduling."""
        d = self.to_dict()
        d.pop("io")
        d["mc"] = {k: v for k, v in d["mc"].items() if k not in ("threads", "chunk_size")}
        return d

    def norm_params(self) -> NormParams:
        return NormParams(self.physics.r, self.physics.alpha, self.physics.D)

    def noise_spec(self) -> NoiseSpec:
        ph = self.physics
        if ph.forcing == "shell":
            return NoiseSpec.shell(ph.k_max, ph.R, ph.k_force, c_gamma=ph.c_gamma)
        if ph.forcing == "exponential":
            return NoiseSpec.exponential(ph.k_max, ph.R, ph.c_gamma)
        if ph.forcing == "file":
            spec = load_noise_spec(ph.noise_file)
            if spec.k_max != ph.k_max:
                raise ConfigError(f"noise file has k_max={spec.k_max}, config has {ph.k_max}")
            return spec
        if ph.forcing == "physical":
            shell = NoiseSpec.shell(ph.k_max, 1.0, ph.k_force, c_gamma=ph.c_gamma)
            phys = PhysicalParams(ph.nu, ph.L, ph.Gamma0, shell.gamma / shell.gamma.sum())
            return nondimensionalize(phys, ph.c_gamma)
        return NoiseSpec.zero(ph.k_max)

    def validate(self) -> "RunConfig":
        """Raise :class:`ConfigError` on any invalid setting."""
        ph, nu, mc, ex = self.physics, self.numerics, self.mc, self.experiment
        checks = [
            (self.run.experiment in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}"),
            (ph.forcing in FORCINGS, f"forcing must be one of {FORCINGS}"),
            (ph.initial in INITIALS, f"initial must be one of {INITIALS}"),
            (ph.k_max >= 1, "k_max must be at least 1"),
            (ph.delta > 0, "delta must be positive"),
            (ph.Phi0 >= 0, "Phi0 must be nonnegative"),
            (nu.h > 0 and nu.T > 0, "h and T must be positive"),
            (nu.order in (1, 2), "order must be 1 or 2"),
            (nu.tau_mode in ("production", "certified"), "tau_mode must be production or certified"),
            (nu.n_substeps >= 1 and nu.picard_grid >= 1 and nu.picard_max_iter >= 1, "counts must be positive"),
            (nu.sample_every >= 1, "sample_every must be positive"),
            (mc.n_traj >= 1, "n_traj must be positive"),
            (mc.threads >= 1 and mc.chunk_size >= 1, "threads and chunk_size must be positive"),
            (self.io.checkpoint_every >= 0, "checkpoint_every must be nonnegative"),
            (self.io.checkpoint_format in ("bin", "csv"), "checkpoint_format must be bin or csv"),
            (ex.n_checks >= 0 and ex.levels >= 0 and ex.n_fields >= 1, "experiment counts out of range"),
            (ex.tau > 0 and ex.T_avg > 0 and ex.spacing > 0 and ex.burn_in >= 0, "experiment times out of range"),
            (ex.n_snapshots >= 1 and ex.a_hat > 0, "n_snapshots and a_hat must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if ph.forcing == "file" and not ph.noise_file:
            raise ConfigError("forcing = file needs noise_file")
        if ph.R < 0:
            raise ConfigError("R must be nonnegative")
        try:
            check_seed(mc.seed)
            self.norm_params()
            self.noise_spec()
        except ConfigError:
            raise
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None
        return self
