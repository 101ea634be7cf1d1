"""Command line interface.

Every subcommand is a thin client of the HTTP service: by default the
app is driven in process, and --url points the same calls at a remote
instance instead.  Exit codes follow the error taxonomy: 0 ok, 1 usage,
2 I/O, 3 validation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import base64
import os
import sys
import time

import numpy as np

from .config import RunConfig, run_config_from_text
from .errors import (DataIOError, EngineError, NumericalError, UsageError,
                     ValidationError)
from .version import __version__

_ERROR_KINDS = {cls.kind: cls for cls in
                (UsageError, DataIOError, ValidationError, NumericalError)}


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage through the error taxonomy."""

    def error(self, message: str):
        raise UsageError(message)


class ServiceClient:
    def __init__(self, url: str | None = None):
        if url:
            import httpx
            self._client = httpx.Client(base_url=url, timeout=None)
        else:
            import warnings
            with warnings.catch_warnings():
                # in-process transport; the httpx/httpx2 migration is noise here
                warnings.simplefilter("ignore", Warning)
                from starlette.testclient import TestClient
            from .service.app import create_app
            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code == 200:
            return resp.json()
        try:
            body = resp.json()
        except ValueError:
            body = {}
        message = body.get("message", f"service returned HTTP {resp.status_code}")
        raise _ERROR_KINDS.get(body.get("kind"), EngineError)(message)


def _b64(blob: bytes) -> str:
    return base64.b64encode(blob).decode("ascii")


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError:
        raise DataIOError(f"cannot read {path!r}: file not found")
    except OSError as exc:
        raise DataIOError(f"cannot read {path!r}: {exc}")


def _write_bytes(path: str, blob: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise DataIOError(f"cannot write {path!r}: {exc}")


def _load_run_config(path: str | None) -> RunConfig:
    if not path:
        return RunConfig()
    return run_config_from_text(_read_bytes(path).decode("utf-8"))


def _config_text(path: str | None) -> str | None:
    return _read_bytes(path).decode("utf-8") if path else None


def _ensure_dir(path: str) -> str:
    if path:
        os.makedirs(path, exist_ok=True)
    return path or "."


def _stem(path: str) -> str:
    base = os.path.basename(path)
    return base[:-4] if base.lower().endswith(".wav") else base


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_separate(args: argparse.Namespace) -> int:
    rc = _load_run_config(args.config)
    weights = args.weights or rc.weights
    inputs = args.inputs or ([rc.input] if rc.input else [])
    out_dir = _ensure_dir(args.output_dir or rc.output_dir)
    if not weights:
        raise UsageError("a weights file is required (--weights or config)")
    if not inputs:
        raise UsageError("at least one input WAV is required")
    client = ServiceClient(args.url)
    weights_b64 = _b64(_read_bytes(weights))
    for path in inputs:
        reply = client.post("/separate", {
            "weights_b64": weights_b64,
            "wav_b64": _b64(_read_bytes(path)),
        })
        for j, blob in enumerate(reply["sources_wav_b64"]):
            out = os.path.join(out_dir, f"{_stem(path)}_source{j + 1}.wav")
            _write_bytes(out, base64.b64decode(blob))
            print(f"wrote {out}")
    return 0


def cmd_stream(args: argparse.Namespace) -> int:
    from .wavio import WavClip, wav_read, wav_write

    rc = _load_run_config(args.config)
    weights = args.weights or rc.weights
    path = args.input or rc.input
    out_dir = _ensure_dir(args.output_dir or rc.output_dir)
    hop = args.hop if args.hop is not None else rc.hop
    if not weights:
        raise UsageError("a weights file is required (--weights or config)")
    if not path:
        raise UsageError("an input WAV is required")
    clip = wav_read(path)
    client = ServiceClient(args.url)
    opened = client.post("/stream/open", {
        "weights_b64": _b64(_read_bytes(weights)),
        "hop": hop,
    })
    if clip.sample_rate != opened["sample_rate"]:
        raise ValidationError(
            f"clip sample_rate {clip.sample_rate} does not match the model's "
            f"{opened['sample_rate']}")
    sid = opened["session_id"]
    hop = opened["hop_samples"]
    t = clip.samples.shape[0]
    pad = (-t) % hop
    samples = np.concatenate([clip.samples,
                              np.zeros(pad, dtype=np.float32)])
    chunks: list[list[bytes]] = []
    push_times = []
    for lo in range(0, samples.shape[0], hop):
        chunk = np.ascontiguousarray(samples[lo:lo + hop], dtype="<f4")
        t0 = time.perf_counter()
        reply = client.post("/stream/push", {
            "session_id": sid,
            "chunk_b64": _b64(chunk.tobytes()),
        })
        push_times.append(time.perf_counter() - t0)
        chunks.append([base64.b64decode(b) for b in reply["outputs_b64"]])
    client.post("/stream/close", {"session_id": sid})

    n_sources = opened["n_sources"]
    outputs = [np.concatenate([np.frombuffer(push[j], dtype="<f4")
                               for push in chunks])[:t]
               for j in range(n_sources)]
    for j, row in enumerate(outputs):
        out = os.path.join(out_dir, f"{_stem(path)}_stream_source{j + 1}.wav")
        wav_write(out, WavClip(clip.sample_rate, row), "float32")
        print(f"wrote {out}")

    rate = clip.sample_rate
    median = sorted(push_times)[len(push_times) // 2]
    print(f"hop_samples={hop}")
    print(f"latency_samples={opened['latency_samples']}")
    print(f"latency_ms={opened['latency_samples'] / rate * 1000.0:.2f}")
    print(f"pushes={len(push_times)}")
    print(f"push_median_s={median:.6f}")
    print(f"rtf_stream={median / (hop / rate):.4f}")
    return 0


def cmd_profile(args: argparse.Namespace) -> int:
    client = ServiceClient(args.url)
    reply = client.post("/profile", {
        "preset": args.preset,
        "config_text": _config_text(args.config),
        "samples": args.samples,
        "precision": args.precision,
    })
    text = reply["report_kv"] if args.format == "kv" else reply["report_text"]
    print(text, end="")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    client = ServiceClient(args.url)
    reply = client.post("/gradcheck", {"seed": args.seed})
    for item in reply["results"]:
        status = "PASS" if item["passed"] else "FAIL"
        print(f"{status} {item['name']} error={item['error']:.3e} "
              f"tol={item['tol']:.0e}")
    if not reply["all_passed"]:
        raise NumericalError("gradient checks failed")
    print("all gradient checks passed")
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    out_dir = _ensure_dir(args.output_dir)
    client = ServiceClient(args.url)
    config_text = _config_text(args.config)
    reply = client.post("/train-toy", {
        "preset": None if config_text else args.preset,
        "config_text": config_text,
        "epochs": args.epochs,
        "seed": args.seed,
        "n_clips": args.clips,
        "samples": args.samples,
        "snr_db": args.snr_db,
        "base_lr": args.lr,
        "batch_size": args.batch_size,
        "decay_every": args.decay_every,
        "decay_factor": args.decay_factor,
    })
    records = reply["records"]
    lines = [(f"epoch={r['epoch']} loss={r['loss']:.6f} "
              f"cum_flops={r['cum_flops']} wall_time_s={r['wall_time_s']:.3f}")
             for r in records]
    records_path = os.path.join(out_dir, "records.txt")
    _write_bytes(records_path, ("\n".join(lines) + "\n").encode("utf-8"))
    weights_path = os.path.join(out_dir, "weights.sdrf")
    _write_bytes(weights_path, base64.b64decode(reply["weights_b64"]))
    step = max(1, len(lines) // 20)
    for i, line in enumerate(lines):
        if i % step == 0 or i == len(lines) - 1:
            print(line)
    print(f"wrote {weights_path}")
    print(f"wrote {records_path}")
    print(f"final_si_sdri_db={reply['final_si_sdri_db']:.3f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    client = ServiceClient(args.url)
    reply = client.post("/eval", {
        "targets_wav_b64": [_b64(_read_bytes(p)) for p in args.targets],
        "estimates_wav_b64": [_b64(_read_bytes(p)) for p in args.estimates],
        "mixture_wav_b64": _b64(_read_bytes(args.mixture)) if args.mixture else None,
    })
    parts = []
    if reply["si_sdri_db"] is not None:
        parts.append(f"si_sdri_db={reply['si_sdri_db']:.3f}")
    if reply["si_sdr_db"] is not None:
        parts.append(f"si_sdr_db={reply['si_sdr_db']:.3f}")
    parts.append(f"n_active={reply['n_active']}")
    parts.append("perm=" + ",".join(str(p) for p in reply["perm"]))
    print(" ".join(parts))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--url", default=None,
                        help="remote service URL (default: run in process)")

    parser = _Parser(prog="sudormrf",
                     description="Time-domain audio source separation engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("separate", parents=[common],
                       help="split mixture WAVs into per-source WAVs")
    p.add_argument("inputs", nargs="*", help="mixture WAV files")
    p.add_argument("--config", help="key=value run config file")
    p.add_argument("--weights", help="SDRF weight file")
    p.add_argument("--output-dir", default="")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("stream", parents=[common],
                       help="chunked causal separation with a latency report")
    p.add_argument("input", nargs="?", help="mixture WAV file")
    p.add_argument("--config", help="key=value run config file")
    p.add_argument("--weights", help="SDRF weight file")
    p.add_argument("--hop", type=int, default=None, help="hop size in samples")
    p.add_argument("--output-dir", default="")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("profile", parents=[common],
                       help="analytic parameter/FLOP/memory report")
    p.add_argument("--preset", help="named model preset")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--samples", type=int, default=8000)
    p.add_argument("--precision", default="float32",
                   choices=("float32", "float64"))
    p.add_argument("--format", default="text", choices=("text", "kv"))
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="64-bit finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", parents=[common],
                       help="overfit a small model on synthetic mixtures")
    p.add_argument("--preset", default="toy")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clips", type=int, default=4)
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--decay-every", type=int, default=0)
    p.add_argument("--decay-factor", type=float, default=5.0)
    p.add_argument("--output-dir", default="")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", parents=[common],
                       help="SI-SDR improvement of estimates against targets")
    p.add_argument("--targets", nargs="+", required=True)
    p.add_argument("--estimates", nargs="+", required=True)
    p.add_argument("--mixture", help="mixture WAV (default: sum of targets)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:        # --help / --version
        return int(exc.code or 0)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
