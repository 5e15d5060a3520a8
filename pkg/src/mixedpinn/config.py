"""Experiment configuration: INI files with typed, fully defaulted sections."""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section and key."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(t) for t in s.replace(",", " ").split())


def _ints(s: str) -> tuple:
    return tuple(int(t) for t in s.replace(",", " ").split())


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


def _choice(*options):
    def parse(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {v!r}")
        return v
    return parse


# section -> key -> (parser, default as text)
SCHEMA: dict = {
    "run": {
        "seed": (int, "0"),
        "dtype": (_choice("float64", "float32"), "float64"),
    },
    "geometry": {
        "name": (_choice("geometry1", "geometry2", "homogeneous"), "geometry1"),
        "center": (_floats, "0.5 0.5"),
        "radius": (float, "0.25"),
        "rectangles": (_floats, ""),
    },
    "material": {
        "E_mat": (_opt_float, ""), "E_inc": (_opt_float, ""),
        "k_mat": (_opt_float, ""), "k_inc": (_opt_float, ""),
        "nu_mat": (float, "0.3"), "nu_inc": (float, "0.3"),
        "alpha_mat": (float, "1.0"), "alpha_inc": (float, "1.0"),
        "T0": (float, "0.0"),
    },
    "collocation": {
        "interior": (int, "5000"),
        "n_edge": (_opt_int, ""),
        "refine": (_choice("none", "left_edge", "interface"), "none"),
        "extra": (int, "0"),
        "band": (float, "0.02"),
        "smoothing": (float, "0.0"),
    },
    "network": {
        "layers": (int, "5"),
        "neurons": (int, "40"),
        "hard_bc": (_bool, "false"),
    },
    "physics": {
        "formulation": (_choice("mixed", "standard_pinn", "dem"), "mixed"),
        "thermal_energy": (_choice("energy", "boundary"), "energy"),
        "reduction": (_choice("group", "global"), "group"),
        "one_way_coupling": (_bool, "true"),
    },
    "training": {
        "optimizer": (_choice("adam", "lbfgs"), "adam"),
        "lr": (float, "0.001"),
        "history": (int, "50"),
        "schedule": (_choice("coupled", "sequential"), "coupled"),
        "n_A": (int, "1000"),
        "n_T": (int, "0"),
        "n_M": (int, "0"),
        "start": (_choice("thermal", "mechanical"), "thermal"),
        "log_every": (int, "0"),
        "loss_threshold": (_opt_float, ""),
        "allow_sequential_lbfgs": (_bool, "false"),
        "jitter": (_bool, "false"),
    },
    "fem": {
        "enabled": (_bool, "true"),
        "n": (int, "100"),
        "sampling": (_choice("centroid", "gauss"), "centroid"),
        "convergence": (_ints, ""),
    },
    "evaluation": {
        "grid": (int, "101"),
    },
    "parametric": {
        "enabled": (_bool, "false"),
        "ratios": (_floats, "1 2 3 4 5 6 7 8 9 10"),
        "w": (float, "0.1"),
        "epochs_per_ratio": (_opt_int, ""),
        "query_ratio": (float, "15"),
    },
    "sweep": {
        "layers": (_ints, "1 2 3 4 5 6"),
        "neurons": (_ints, "5 10 20 40 60"),
        "fixed_layers": (int, "5"),
        "fixed_neurons": (int, "40"),
    },
}


@dataclass
class ExperimentConfig:
    """Parsed configuration: ``values[section][key]`` plus the resolved text form."""

    values: dict
    source: str = "<defaults>"

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def formulation(self) -> str:
        f = self.values["physics"]["formulation"]
        return "standard" if f == "standard_pinn" else f

    def resolved_text(self) -> str:
        """INI text with every key, defaults expanded."""
        parser = _parser()
        for section, keys in SCHEMA.items():
            parser.add_section(section)
            for key in keys:
                parser.set(section, key, _render(self.values[section][key]))
        lines = [f"# resolved from {self.source}"]
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in parser.items(section)]
            lines.append("")
        return "\n".join(lines)


def _render(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return " ".join(repr(t) if isinstance(t, float) else str(t) for t in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str          # keys such as E_mat and n_A are case-sensitive
    return p


def preset_names() -> list[str]:
    root = resources.files("mixedpinn") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def _read_text(spec: str) -> tuple[str, str]:
    path = Path(spec)
    if path.is_file():
        return path.read_text(), str(path)
    name = spec[len("preset:"):] if spec.startswith("preset:") else spec
    res = resources.files("mixedpinn") / "presets" / f"{name}.cfg"
    if res.is_file():
        return res.read_text(), f"preset:{name}"
    raise ConfigError(f"config {spec!r} is neither a file nor a preset "
                      f"(presets: {', '.join(preset_names())})")


def parse_config(text: str, source: str = "<string>", overrides=()) -> ExperimentConfig:
    """Parse INI ``text``; ``overrides`` are ``section.key=value`` strings applied last."""
    parser = _parser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())

    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, default) in keys.items():
            raw = parser.get(section, key, fallback=default)
            try:
                values[section][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for [{section}] {key}: {exc}") from exc
    cfg = ExperimentConfig(values, source)
    _validate(cfg)
    return cfg


def load_config(spec: str, overrides=()) -> ExperimentConfig:
    """Load a config file path or a shipped preset name."""
    text, source = _read_text(spec)
    return parse_config(text, source, overrides)


def _validate(cfg: ExperimentConfig) -> None:
    src = cfg.source
    if cfg["network"]["layers"] < 1 or cfg["network"]["neurons"] < 1:
        raise ConfigError(f"{src}: [network] layers and neurons must be positive")
    if cfg["collocation"]["interior"] < 4:
        raise ConfigError(f"{src}: [collocation] interior must be at least 4")
    if cfg["evaluation"]["grid"] < 2:
        raise ConfigError(f"{src}: [evaluation] grid must be at least 2")
    if cfg["fem"]["n"] < 1:
        raise ConfigError(f"{src}: [fem] n must be positive")
    rects = cfg["geometry"]["rectangles"]
    if len(rects) % 4:
        raise ConfigError(f"{src}: [geometry] rectangles needs groups of four numbers x0 y0 x1 y1")
    if len(cfg["geometry"]["center"]) != 2:
        raise ConfigError(f"{src}: [geometry] center needs two numbers")
    p = cfg["parametric"]
    if p["enabled"]:
        if cfg.formulation != "mixed":
            raise ConfigError(f"{src}: [parametric] requires formulation = mixed")
        if not p["ratios"]:
            raise ConfigError(f"{src}: [parametric] ratios is empty")
        if p["w"] < 0:
            raise ConfigError(f"{src}: [parametric] w must be non-negative")
        if cfg["training"]["jitter"]:
            raise ConfigError(f"{src}: [training] jitter must be off for parametric runs")
