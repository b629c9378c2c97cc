"""Experiment configuration files.

An INI-style document with three sections::

    [experiment]
    id = near_eve
    seed = 2009          ; required, all randomness derives from it
    trials = 40
    out = near_eve.csv       ; optional, --out overrides

    [channel]
    kind = deterministic ; or beta / mixture
    gamma_ab = 0.005
    gamma_ae = 0.004
    gamma_ba = 0.009
    ; beta:    ab = 2, 8      ae = ...   ba = ...   (alpha, beta per link)
    ; mixture: weights = 0.5, 0.5
    ;          triples = 0.0 0.5 0.1 | 0.2 0.1 0.2

    [session]
    n_init = 0, 100, 1000 ; sweep
    n_data = 100000
    retry_limit = 7
    cipher = ideal        ; or wep
    payload_bytes = 16
    data_frame_bytes = 1500
    eve_mode = capture    ; or iv
    eve_feedback_erasure = 0.0
    key = <26 hex chars>  ; optional

    [keyshare]            ; optional
    k = 10
    n1 = 24
    sessions = 1000
    feedback = ack        ; or rich

Unknown sections and keys are rejected.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .channel import FadingModel, model_from_dict
from .errors import ConfigurationError
from .simulator import CIPHERS, EVE_MODES, SessionConfig

SCHEMA: dict[str, dict[str, bool]] = {
    # key -> required
    "experiment": {"id": False, "seed": True, "trials": False, "out": False},
    "channel": {"kind": True, "gamma_ab": False, "gamma_ae": False, "gamma_ba": False,
                "ab": False, "ae": False, "ba": False, "weights": False, "triples": False},
    "session": {"n_init": False, "n_data": True, "retry_limit": False, "cipher": False,
                "payload_bytes": False, "data_frame_bytes": False, "eve_mode": False,
                "eve_feedback_erasure": False, "key": False},
    "keyshare": {"k": False, "n1": False, "sessions": False, "feedback": False},
}
REQUIRED_SECTIONS = ("experiment", "channel", "session")


class ConfigError(ConfigurationError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class KeyShareParams:
    k: int = 10
    n1: int = 24
    sessions: int = 1000
    rich_feedback: bool = False


@dataclass
class ExperimentConfig:
    experiment_id: str
    seed: int
    trials: int
    model: FadingModel
    session: SessionConfig
    n_init_sweep: list[int]
    out: str | None = None
    keyshare: KeyShareParams = field(default_factory=KeyShareParams)


def _line_index(text: str) -> dict[tuple[str, str], int]:
    index: dict[tuple[str, str], int] = {}
    section = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            index[(section, "")] = n
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            index[(section, m.group(1).lower())] = n
    return index


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict):
        self.p = parser
        self.lines = lines

    def fail(self, section: str, key: str, msg: str):
        raise ConfigError(msg, self.lines.get((section, key)), f"{section}.{key}")

    def raw(self, section: str, key: str, default=None):
        if not self.p.has_section(section) or not self.p.has_option(section, key):
            return default
        return self.p.get(section, key)

    def int(self, section, key, default=None, minimum=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            out = int(v, 0)
        except ValueError:
            self.fail(section, key, f"expected an integer, got {v!r}")
        if minimum is not None and out < minimum:
            self.fail(section, key, f"must be >= {minimum}")
        return out

    def float(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            self.fail(section, key, f"expected a number, got {v!r}")

    def floats(self, section, key):
        v = self.raw(section, key)
        if v is None:
            return None
        try:
            return [float(x) for x in v.replace(",", " ").split()]
        except ValueError:
            self.fail(section, key, f"expected numbers, got {v!r}")

    def ints(self, section, key, default):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            out = [int(x, 0) for x in v.replace(",", " ").split()]
        except ValueError:
            self.fail(section, key, f"expected integers, got {v!r}")
        if not out or min(out) < 0:
            self.fail(section, key, "need one or more non-negative integers")
        return out

    def choice(self, section, key, options, default):
        v = self.raw(section, key, default)
        if v not in options:
            self.fail(section, key, f"must be one of {', '.join(options)}, got {v!r}")
        return v


def _channel(r: _Reader) -> FadingModel:
    kind = r.choice("channel", "kind", ("deterministic", "beta", "mixture"), None)
    spec: dict = {"kind": kind}
    if kind == "deterministic":
        for key in ("gamma_ab", "gamma_ae"):
            if r.raw("channel", key) is None:
                r.fail("channel", key, "required for a deterministic model")
            spec[key] = r.float("channel", key)
        spec["gamma_ba"] = r.float("channel", "gamma_ba", 0.0)
    elif kind == "beta":
        for key in ("ab", "ae", "ba"):
            vals = r.floats("channel", key)
            if vals is None:
                if key != "ba":
                    r.fail("channel", key, "required for a beta model")
                continue
            if len(vals) != 2:
                r.fail("channel", key, "expected 'alpha, beta'")
            spec[key] = vals
    else:
        weights = r.floats("channel", "weights")
        raw = r.raw("channel", "triples")
        if weights is None or raw is None:
            r.fail("channel", "weights" if weights is None else "triples", "required for a mixture model")
        triples = []
        for part in raw.split("|"):
            try:
                vals = [float(x) for x in part.replace(",", " ").split()]
            except ValueError:
                r.fail("channel", "triples", f"bad triple {part.strip()!r}")
            if len(vals) not in (2, 3):
                r.fail("channel", "triples", f"triple needs 2 or 3 values: {part.strip()!r}")
            triples.append(vals)
        spec.update(weights=weights, triples=triples)
    try:
        return model_from_dict(spec)
    except ConfigurationError as exc:
        raise ConfigError(str(exc), r.lines.get(("channel", "kind")), "channel") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("content before the first [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("syntax error", line) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], exc.lineno) from None
    lines = _line_index(text)
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, "")), section)
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", lines.get((section, key)), f"{section}.{key}")
    for section in REQUIRED_SECTIONS:
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]")
    for section, keys in SCHEMA.items():
        if not parser.has_section(section):
            continue
        for key, required in keys.items():
            if required and not parser.has_option(section, key):
                raise ConfigError("required key missing", lines.get((section, "")), f"{section}.{key}")

    r = _Reader(parser, lines)
    seed = r.int("experiment", "seed", minimum=0)
    model = _channel(r)
    key = r.raw("session", "key")
    if key is not None:
        try:
            key_bytes = bytes.fromhex(key)
        except ValueError:
            r.fail("session", "key", "not valid hex")
        if len(key_bytes) != 13:
            r.fail("session", "key", "WEP-104 key needs 26 hex characters")
    else:
        key_bytes = None
    fb_erasure = r.float("session", "eve_feedback_erasure", 0.0)
    if not 0.0 <= fb_erasure <= 1.0:
        r.fail("session", "eve_feedback_erasure", "must be a probability")
    session = SessionConfig(
        model=model,
        n_data=r.int("session", "n_data", minimum=0),
        retry_limit=r.int("session", "retry_limit", 7, minimum=1),
        cipher=r.choice("session", "cipher", CIPHERS, "ideal"),
        payload_bytes=r.int("session", "payload_bytes", 16, minimum=0),
        data_frame_bytes=r.int("session", "data_frame_bytes", 1500, minimum=1),
        eve_mode=r.choice("session", "eve_mode", EVE_MODES, "capture"),
        eve_feedback_erasure=fb_erasure,
        key=key_bytes,
    )
    ks = KeyShareParams(
        k=r.int("keyshare", "k", 10, minimum=1),
        n1=r.int("keyshare", "n1", 24, minimum=1),
        sessions=r.int("keyshare", "sessions", 1000, minimum=1),
        rich_feedback=r.choice("keyshare", "feedback", ("ack", "rich"), "ack") == "rich",
    )
    if ks.n1 > 128:
        r.fail("keyshare", "n1", "must be <= 128")
    return ExperimentConfig(
        experiment_id=r.raw("experiment", "id", Path(source).stem),
        seed=seed,
        trials=r.int("experiment", "trials", 1, minimum=1),
        model=model,
        session=session,
        n_init_sweep=r.ints("session", "n_init", [0]),
        out=r.raw("experiment", "out"),
        keyshare=ks,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
