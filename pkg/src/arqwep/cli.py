"""Command line entry point: ``arqwep {simulate,analyze,codec,keyshare,report}``."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis
from .channel import Deterministic, ErasureTriple, FadingModel
from .config import ConfigError, load_config
from .errors import ArqWepError, ConfigurationError, DivergentExpectationError
from .simulator import run_experiment, run_keyshare_batch, run_keyshare_session, run_session, trial_seed
from .wep import WepFrame, check_iv, wep_decrypt, wep_encrypt

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_ICV = 4

FORMULAS = (
    "capacity", "equivalent-erasure", "noisy-rate", "outage", "trials", "rate",
    "useful-bound", "attack-time",
)


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"arqwep: {msg}", file=sys.stderr)


def _hex(value: str, nbytes: int, what: str) -> bytes:
    if len(value) != 2 * nbytes:
        raise UsageError(f"{what} must be {2 * nbytes} hex characters, got {len(value)}")
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise UsageError(f"{what} is not valid hex") from None


def _iv(value: str, what: str = "IV") -> int:
    # IVs are written big-endian as a 6-digit hex number
    return check_iv(int.from_bytes(_hex(value, 3, what), "big"))


# --- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed_override is None else args.seed_override
    out = Path(args.out or cfg.out or f"{cfg.experiment_id}.csv")
    result = run_experiment(cfg.session, cfg.trials, cfg.n_init_sweep, seed, cfg.experiment_id, args.jobs)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(result.trials_csv())
    summary_path = out.with_name(out.stem + "_summary.csv")
    summary_path.write_text(result.summary_csv())

    print(f"experiment {cfg.experiment_id}: seed {seed}, {cfg.trials} trial(s) per point, "
          f"n_data {cfg.session.n_data}, eve mode {cfg.session.eve_mode}")
    print(f"{'n_init':>8} {'mean k_i':>10} {'mean useful':>12} {'stderr':>10} {'bound':>12}")
    for p in result.summary:
        print(f"{p.n_init:>8} {p.mean_k_i:>10.1f} {p.mean_useful:>12.3f} {p.stderr_useful:>10.3f} {p.mean_bound:>12.3f}")
    print(f"wrote {out} and {summary_path}")

    if args.trace:
        if cfg.session.cipher != "wep":
            raise UsageError("--trace needs cipher = wep in [session]")
        n0 = cfg.n_init_sweep[0]
        m = run_session(replace(cfg.session, n_init=n0, seed=trial_seed(seed, n0, 0), trace=True))
        Path(args.trace).write_bytes(m.trace)
        print(f"wrote trace of n_init={n0} trial 0 to {args.trace}")

    aborted = [m for runs in result.metrics.values() for m in runs if m.aborted]
    if aborted:
        _err(f"{len(aborted)} session(s) aborted, first: {aborted[0].aborted}")
        return EXIT_RUNTIME
    return EXIT_OK


# --- analyze ----------------------------------------------------------------

def _model_from_args(args) -> FadingModel:
    if args.config:
        return load_config(args.config).model
    return Deterministic(ErasureTriple(args.gab, args.gae, args.gba))


def cmd_analyze(args) -> int:
    f = args.formula
    notes: list[str] = []
    if f == "attack-time":
        if args.useful is None:
            raise UsageError("attack-time needs --useful")
        t = analysis.attack_time_estimate(args.useful, args.session_frames, args.baseline_minutes)
        value = t.hours
        inputs = {"useful": args.useful, "session_frames": args.session_frames,
                  "baseline_minutes": args.baseline_minutes}
        notes = [f"{t.human()} ({t.hours:.6g} hours)", *t.assumptions]
    else:
        model = _model_from_args(args)
        fb = args.feedback_loss
        if f == "capacity":
            value, inputs = analysis.secret_key_capacity(model), {}
        elif f == "equivalent-erasure":
            value, inputs = analysis.eve_equivalent_erasure(model.mean()), {}
            if not isinstance(model, Deterministic):
                notes.append("evaluated at the mean erasure triple")
        elif f == "noisy-rate":
            value, inputs = analysis.noisy_feedback_capacity_rate(model), {}
        elif f == "outage":
            value, inputs = analysis.secrecy_outage(model, args.k), {"k": args.k}
        elif f == "trials":
            value, inputs = analysis.expected_trials(model, args.k, fb), {"k": args.k, "feedback_loss": fb}
        elif f == "rate":
            value, inputs = analysis.key_rate(model, args.k, fb), {"k": args.k, "feedback_loss": fb}
        else:
            if args.ki > args.k:
                raise UsageError("--ki must not exceed --k")
            value = analysis.eve_useful_frames_bound(model, args.ki, args.k)
            inputs = {"k_i": args.ki, "k": args.k}
            notes.append("sum over accepted data frames of P(Eve captured every frame up to and including it)")
        if not isinstance(model, Deterministic):
            notes.append(f"expectation over a {model.kind} fading model")
    if args.csv:
        sys.stdout.write(analysis.rows_to_csv([analysis.RateReport(f, value, inputs)]))
    else:
        print(f"{f} = {value:.10g}")
    for n in notes:
        print(f"  note: {n}")
    return EXIT_OK


# --- codec ------------------------------------------------------------------

def cmd_codec(args) -> int:
    key = _hex(args.key, 13, "key")
    data = Path(args.input).read_bytes()
    if args.op == "encrypt":
        if args.iv is None:
            raise UsageError("encrypt needs --iv")
        seed_iv = _iv(args.iv)
        header_iv = _iv(args.header_iv, "header IV") if args.header_iv else seed_iv
        Path(args.output).write_bytes(wep_encrypt(data, seed_iv, header_iv, key).to_bytes())
        return EXIT_OK
    try:
        frame = WepFrame.from_bytes(data)
    except ArqWepError as exc:
        raise UsageError(f"malformed frame file: {exc}") from None
    seed_iv = _iv(args.iv) if args.iv else frame.header_iv
    message = wep_decrypt(frame, seed_iv, key)
    if message is None:
        _err("ICV mismatch: wrong key or IV, or corrupted frame")
        return EXIT_ICV
    Path(args.output).write_bytes(message)
    return EXIT_OK


# --- keyshare ---------------------------------------------------------------

def cmd_keyshare(args) -> int:
    model = _model_from_args(args)
    width = (args.n1 + 3) // 4
    if args.sessions == 1:
        transcript: list = []
        r = run_keyshare_session(model, args.k, args.seed, args.n1, args.rich_feedback, transcript)
        for seq, payload, got, ack, heard in transcript:
            print(f"frame {seq:4d} payload {payload:0{width}x}  bob {'received' if got else 'erased  '}"
                  f"  ack {'delivered' if ack else ('lost     ' if got else '-        ')}"
                  f"  eve {'captured' if heard else 'missed'}")
        print(f"alice key {r.alice_key:0{width}x}")
        print(f"bob   key {r.bob_key:0{width}x}  {'(agree)' if r.alice_key == r.bob_key else '(MISMATCH)'}")
        print(f"eve   key {r.eve_key:0{width}x}")
        print(f"transmissions {r.trials}")
        print("verdict: eve blind (missed an accepted frame)" if r.eve_blind
              else "verdict: SECRECY OUTAGE (eve captured every accepted frame)")
        return EXIT_OK if r.alice_key == r.bob_key else EXIT_RUNTIME
    b = run_keyshare_batch(model, args.k, args.sessions, args.seed, args.n1, args.rich_feedback)
    outage = analysis.secrecy_outage(model, args.k)
    sigma = math.sqrt(outage * (1 - outage) / b.sessions)
    print(f"sessions {b.sessions}, k {args.k}, n1 {args.n1}, feedback {'rich' if args.rich_feedback else 'ack'}")
    print(f"outage empirical {b.outage_rate:.6f}  analytic {outage:.6f}  ({(b.outage_rate - outage) / sigma if sigma else 0:+.2f} sigma)")
    try:
        trials = analysis.expected_trials(model, args.k, with_feedback_loss=not args.rich_feedback)
        print(f"mean transmissions {b.mean_trials:.4f}  analytic {trials:.4f}")
        print(f"keys per frame {b.keys_per_frame:.6f}  analytic {1 / trials:.6f}")
    except DivergentExpectationError as exc:
        print(f"mean transmissions {b.mean_trials:.4f}  analytic diverges ({exc})")
    print(f"key mismatches {b.mismatches}")
    print(f"blind-eve key collisions {b.eve_false_keys}")
    return EXIT_OK if b.mismatches == 0 else EXIT_RUNTIME


# --- report -----------------------------------------------------------------

def cmd_report(args) -> int:
    cfg = load_config(args.config)
    rows = analysis.report_rows(cfg.model, cfg.keyshare.k, cfg.n_init_sweep[0], cfg.session.n_data)
    sys.stdout.write(analysis.rows_to_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arqwep", description="ARQ-WEP simulation and analysis toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run an experiment from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="trial CSV path (summary goes next to it)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed-override", type=int)
    s.add_argument("--trace", help="write a frame trace of the first trial (wep cipher only)")
    s.set_defaults(func=cmd_simulate)

    def channel_args(q):
        q.add_argument("--config", help="take the fading model from a config file")
        q.add_argument("--gab", type=float, default=0.0, help="Alice->Bob erasure probability")
        q.add_argument("--gae", type=float, default=0.0, help="Alice->Eve erasure probability")
        q.add_argument("--gba", type=float, default=0.0, help="Bob->Alice erasure probability")

    a = sub.add_parser("analyze", help="evaluate a closed-form expression")
    a.add_argument("formula", choices=FORMULAS)
    channel_args(a)
    a.add_argument("--k", type=int, default=10)
    a.add_argument("--ki", type=int, default=0)
    a.add_argument("--feedback-loss", action="store_true", help="include ACK erasures in trials/rate")
    a.add_argument("--useful", type=float, help="useful frames per session (attack-time)")
    a.add_argument("--session-frames", type=int, default=100_000)
    a.add_argument("--baseline-minutes", type=float, default=analysis.BASELINE_ATTACK_MINUTES)
    a.add_argument("--csv", action="store_true")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("codec", help="classic WEP file encryption/decryption")
    c.add_argument("op", choices=("encrypt", "decrypt"))
    c.add_argument("--key", required=True, help="26 hex characters")
    c.add_argument("--iv", help="6 hex characters; seed IV (decrypt defaults to the frame's header IV)")
    c.add_argument("--header-iv", help="header IV when it differs from the seed IV")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", dest="output", required=True)
    c.set_defaults(func=cmd_codec)

    k = sub.add_parser("keyshare", help="demonstrate ARQ key sharing")
    channel_args(k)
    k.add_argument("--k", type=int, default=10)
    k.add_argument("--n1", type=int, default=24)
    k.add_argument("--seed", type=int, required=True)
    k.add_argument("--sessions", type=int, default=1)
    k.add_argument("--rich-feedback", action="store_true")
    k.set_defaults(func=cmd_keyshare)

    r = sub.add_parser("report", help="all closed forms for a config's channel, as CSV")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "k", 1) < 1 or getattr(args, "sessions", 1) < 1 or getattr(args, "jobs", 1) < 1:
        _err("--k, --sessions and --jobs must be >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_USAGE
    except (UsageError, ConfigurationError, DivergentExpectationError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except ArqWepError as exc:
        _err(f"runtime abort: {exc}")
        return EXIT_RUNTIME
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
