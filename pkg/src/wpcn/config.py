"""Run configuration files.

INI syntax (``configparser``), all powers in watts::

    [network]
    k_users = 2
    n0 = 1e-10
    p_avg = 3.0
    p_max = 35.0          ; optional, required by theorem2/baseline1/baseline2
    epoch_duration = 1.0

    [run]
    schemes = theorem2, baseline1, baseline2
    output = results.csv  ; optional, stdout otherwise

    [profile.1]           ; one section per user, numbered 1..k_users
    eta = 0.2
    p_sat = 9.2e-6
    distance = 10.0

    [profile.2]
    eta = 0.2
    p_sat = 9.2e-6
    distance = 10.0

    [fading]
    seed = 1
    epochs = 10000
    distribution = rayleigh_power
    path_loss_scale = 1e-3    ; mean gain = scale * distance^-exponent
    path_loss_exponent = 3.0

    [truth]
    kind = logistic       ; piecewise_linear | logistic | table
    path = curve.csv      ; table only

    [sweep]               ; optional, used by the sweep command
    variable = p_avg      ; p_avg | p_max
    values = 0.5, 1, 2
    p_max_ratio = 15      ; optional, p_max = ratio * p_avg
    k_values = 3, 5       ; optional
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import allocator as al
from .allocator import NetworkConfig
from .eh_model import CURVE_KINDS, TABLE, EhuProfile, load_table_csv
from .simulator import (PATH_LOSS_EXPONENT, PATH_LOSS_SCALE, P_AVG, FadingSpec,
                        SweepSpec, mean_gain)


class ConfigError(ValueError):
    pass


@dataclass
class TruthSpec:
    kind: str = "logistic"
    path: Optional[str] = None

    def resolve(self, base_dir: Optional[Path] = None):
        """Curve object or kind name as accepted by ``curves_for``."""
        if self.kind == TABLE:
            path = Path(self.path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_table_csv(path)
        return self.kind


@dataclass
class RunConfig:
    network: NetworkConfig
    profiles: list
    seed: int = 1
    epochs: int = 10_000
    distribution: str = "rayleigh_power"
    path_loss_scale: float = PATH_LOSS_SCALE
    path_loss_exponent: float = PATH_LOSS_EXPONENT
    truth: TruthSpec = field(default_factory=TruthSpec)
    schemes: tuple = (al.THEOREM2, al.BASELINE1, al.BASELINE2)
    sweep: Optional[dict] = None
    output_path: Optional[str] = None
    base_dir: Optional[Path] = None

    @property
    def fading(self) -> FadingSpec:
        gains = mean_gain([p.distance for p in self.profiles],
                          self.path_loss_scale, self.path_loss_exponent)
        return FadingSpec(gains, self.seed, self.epochs, self.distribution)

    def truth_curve(self):
        return self.truth.resolve(self.base_dir)

    def sweep_spec(self) -> Optional[SweepSpec]:
        if self.sweep is None:
            return None
        return SweepSpec(
            variable=self.sweep["variable"], values=self.sweep["values"],
            fixed=self.network, schemes=self.schemes, truth_curve=self.truth_curve(),
            p_max_ratio=self.sweep.get("p_max_ratio"), k_values=self.sweep.get("k_values"),
        )

    def validate(self) -> "RunConfig":
        net = self.network
        if len(self.profiles) != net.k_users:
            raise ConfigError(f"network.k_users is {net.k_users} but {len(self.profiles)} "
                              "[profile.N] sections were given")
        for s in self.schemes:
            if s not in al.SCHEMES:
                raise ConfigError(f"run.schemes: unknown scheme {s!r}")
        sweeping_pmax = self.sweep is not None and (
            self.sweep["variable"] != P_AVG or self.sweep.get("p_max_ratio") is not None)
        needs_pmax = [s for s in self.schemes if s != al.THEOREM1]
        if needs_pmax and net.p_max is None and not sweeping_pmax:
            raise ConfigError(f"network.p_max is required by {', '.join(needs_pmax)}")
        if (al.BASELINE2 in self.schemes and net.p_max is not None and self.sweep is None
                and net.p_avg > net.p_max):
            raise ConfigError(f"baseline2 needs network.p_avg <= network.p_max "
                              f"({net.p_avg} > {net.p_max})")
        if self.truth.kind not in CURVE_KINDS:
            raise ConfigError(f"truth.kind must be one of {', '.join(CURVE_KINDS)}")
        if self.truth.kind == TABLE and not self.truth.path:
            raise ConfigError("truth.path is required for a table curve")
        if self.sweep is not None:
            try:
                self.sweep_spec()
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"sweep: {exc}") from exc
        return self

    def to_lines(self) -> list[str]:
        """INI text for this configuration; parses back to an equal config."""
        net = self.network
        lines = ["[network]", f"k_users = {net.k_users}", f"n0 = {net.n0!r}",
                 f"p_avg = {net.p_avg!r}"]
        if net.p_max is not None:
            lines.append(f"p_max = {net.p_max!r}")
        lines.append(f"epoch_duration = {net.epoch_duration!r}")
        lines += ["", "[run]", f"schemes = {', '.join(self.schemes)}"]
        if self.output_path:
            lines.append(f"output = {self.output_path}")
        for i, p in enumerate(self.profiles, 1):
            lines += ["", f"[profile.{i}]", f"eta = {p.eta!r}", f"p_sat = {p.p_sat!r}",
                      f"distance = {p.distance!r}"]
        lines += ["", "[fading]", f"seed = {self.seed}", f"epochs = {self.epochs}",
                  f"distribution = {self.distribution}",
                  f"path_loss_scale = {self.path_loss_scale!r}",
                  f"path_loss_exponent = {self.path_loss_exponent!r}"]
        lines += ["", "[truth]", f"kind = {self.truth.kind}"]
        if self.truth.path:
            lines.append(f"path = {self.truth.path}")
        if self.sweep is not None:
            sw = self.sweep
            lines += ["", "[sweep]", f"variable = {sw['variable']}",
                      "values = " + ", ".join(repr(float(v)) for v in sw["values"])]
            if sw.get("p_max_ratio") is not None:
                lines.append(f"p_max_ratio = {sw['p_max_ratio']!r}")
            if sw.get("k_values"):
                lines.append("k_values = " + ", ".join(str(k) for k in sw["k_values"]))
        return lines

    def to_text(self) -> str:
        return "\n".join(self.to_lines()) + "\n"


def _get(cp, section, key, conv, default=...):
    if not cp.has_section(section):
        if default is ...:
            raise ConfigError(f"missing section [{section}]")
        return default
    if not cp.has_option(section, key):
        if default is ...:
            raise ConfigError(f"missing field {section}.{key}")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})") from exc


def _float_list(raw: str) -> list:
    return [float(v) for v in raw.replace(",", " ").split()]


def _int_list(raw: str) -> list:
    return [int(v) for v in raw.replace(",", " ").split()]


def _name_list(raw: str) -> tuple:
    return tuple(v for v in raw.replace(",", " ").split())


def parse_config_text(text: str, base_dir: Optional[Path] = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    k = _get(cp, "network", "k_users", int)
    p_max = _get(cp, "network", "p_max", float, None)
    try:
        net = NetworkConfig(
            k_users=k,
            n0=_get(cp, "network", "n0", float, 1e-10),
            p_avg=_get(cp, "network", "p_avg", float),
            p_max=p_max,
            epoch_duration=_get(cp, "network", "epoch_duration", float, 1.0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"network: {exc}") from exc

    profiles = []
    for i in range(1, k + 1):
        sec = f"profile.{i}"
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}] (network.k_users = {k})")
        try:
            profiles.append(EhuProfile(
                eta=_get(cp, sec, "eta", float),
                p_sat=_get(cp, sec, "p_sat", float),
                distance=_get(cp, sec, "distance", float),
            ))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{sec}: {exc}") from exc
    extra = [s for s in cp.sections() if s.startswith("profile.") and s not in
             {f"profile.{i}" for i in range(1, k + 1)}]
    if extra:
        raise ConfigError(f"unexpected sections {extra} for k_users = {k}")

    sweep = None
    if cp.has_section("sweep"):
        sweep = {
            "variable": _get(cp, "sweep", "variable", str),
            "values": _get(cp, "sweep", "values", _float_list),
            "p_max_ratio": _get(cp, "sweep", "p_max_ratio", float, None),
            "k_values": _get(cp, "sweep", "k_values", _int_list, None),
        }
        if not sweep["values"]:
            raise ConfigError("sweep.values is empty")

    cfg = RunConfig(
        network=net,
        profiles=profiles,
        seed=_get(cp, "fading", "seed", int, 1),
        epochs=_get(cp, "fading", "epochs", int, 10_000),
        distribution=_get(cp, "fading", "distribution", str, "rayleigh_power"),
        path_loss_scale=_get(cp, "fading", "path_loss_scale", float, PATH_LOSS_SCALE),
        path_loss_exponent=_get(cp, "fading", "path_loss_exponent", float, PATH_LOSS_EXPONENT),
        truth=TruthSpec(_get(cp, "truth", "kind", str, "logistic"),
                        _get(cp, "truth", "path", str, None)),
        schemes=_get(cp, "run", "schemes", _name_list, (al.THEOREM2, al.BASELINE1, al.BASELINE2)),
        sweep=sweep,
        output_path=_get(cp, "run", "output", str, None),
        base_dir=base_dir,
    )
    try:
        cfg.fading
    except ValueError as exc:
        raise ConfigError(f"fading: {exc}") from exc
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base_dir=path.parent)


def parse_echo(lines) -> RunConfig:
    """Recover the configuration from the ``# ``-prefixed header of an output
    file. Header lines that are INI comments (``# ; ...``) are ignored."""
    body = []
    for line in lines:
        if not line.startswith("#"):
            break
        body.append(line[2:] if line.startswith("# ") else line[1:])
    return parse_config_text("\n".join(body))


def default_config(k_users: int = 5, p_avg: float = 3.0, p_max: Optional[float] = 35.0,
                   n0: float = 1e-10, seed: int = 1, epochs: int = 10_000) -> RunConfig:
    return RunConfig(
        network=NetworkConfig(k_users, n0, p_avg, p_max),
        profiles=[EhuProfile(0.2, 9.2e-6, 10.0) for _ in range(k_users)],
        seed=seed, epochs=epochs,
    )


def with_seed(cfg: RunConfig, seed: Optional[int]) -> RunConfig:
    return cfg if seed is None else replace(cfg, seed=int(seed))

