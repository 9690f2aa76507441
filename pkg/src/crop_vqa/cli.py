"""``crop-vqa``: thin command-line client for the evaluation service.

``crop-vqa serve`` starts the service; every other data command talks to a
running service over HTTP (``--service`` or ``CROP_VQA_SERVICE``, default
``http://127.0.0.1:8008``). ``conformance`` and ``fixture`` run locally since
they target model servers and the filesystem directly.

Exit codes: 0 for a fully clean run, 2 when a run finished but skipped
errored questions, 1 for configuration or service failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional

import requests

DEFAULT_SERVICE = "http://127.0.0.1:8008"
SERVICE_ENV_VAR = "CROP_VQA_SERVICE"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_SKIPPED_ERRORS = 2


class CliError(Exception):
    pass


def _service_url(args: argparse.Namespace) -> str:
    return args.service or os.environ.get(SERVICE_ENV_VAR) or DEFAULT_SERVICE


def _request(method: str, url: str, payload: Optional[dict] = None, timeout: float = 600.0) -> dict:
    try:
        response = requests.request(method, url, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise CliError(
            f"cannot reach the service at {url}: {exc}\n"
            f"start one with: crop-vqa serve"
        ) from exc
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise CliError(f"{method} {url} failed ({response.status_code}): {detail}")
    return response.json()


def _strategy_payload(args: argparse.Namespace) -> dict:
    feed = {"concat": "concat_with_original", "crop-only": "crop_only"}.get(args.feed, args.feed)
    payload = {
        "kind": args.strategy.replace("-", "_"),
        "ratio": args.ratio,
        "iterations": args.iterations,
        "detector_conf": args.conf,
        "feed_mode": feed,
        "include_full_image_candidate": not args.no_full_candidate,
        "patch_threshold": args.patch_threshold,
        "window_stride_fraction": args.window_stride,
    }
    if args.window_fractions:
        payload["window_fractions"] = [float(f) for f in args.window_fractions.split(",")]
    return payload


def _dataset_payload(args: argparse.Namespace) -> dict:
    parts = args.dataset.split(":")
    kind = parts[0]
    if kind == "records" and len(parts) == 2:
        payload = {"kind": kind, "path": parts[1]}
    elif kind in ("vqav2", "textvqa") and len(parts) == 3:
        payload = {"kind": kind, "path": parts[1], "extra_path": parts[2]}
    else:
        raise CliError(
            f"bad --dataset {args.dataset!r}; expected records:PATH, "
            f"vqav2:QUESTIONS:ANNOTATIONS, or textvqa:QUESTIONS:OCR"
        )
    payload["image_dir"] = args.images
    payload["subset_size"] = args.subset
    payload["seed"] = args.seed
    payload["derive_boxes"] = args.derive_boxes
    return payload


def _backends_payload(args: argparse.Namespace) -> dict:
    return {
        "mode": args.backends,
        "scorer_url": args.scorer_url,
        "detector_url": args.detector_url,
        "segmenter_url": args.segmenter_url,
        "vqa_url": args.vqa_url,
        "saliency_url": args.saliency_url,
        "timeout_s": args.backend_timeout,
    }


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backends",
        choices=("synthetic", "remote"),
        default="synthetic",
        help="synthetic planted-target backends, or remote model servers",
    )
    parser.add_argument("--scorer-url", default=None)
    parser.add_argument("--detector-url", default=None)
    parser.add_argument("--segmenter-url", default=None)
    parser.add_argument("--vqa-url", default=None)
    parser.add_argument("--saliency-url", default=None)
    parser.add_argument("--backend-timeout", type=float, default=30.0, metavar="SECONDS")


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--dataset",
        required=True,
        help="records:PATH | vqav2:QUESTIONS:ANNOTATIONS | textvqa:QUESTIONS:OCR",
    )
    parser.add_argument("--images", default=None, help="image directory")
    parser.add_argument("--subset", type=int, default=None, metavar="N")
    parser.add_argument("--seed", type=int, default=None, metavar="S")
    parser.add_argument(
        "--derive-boxes",
        action="store_true",
        help="derive answer boxes from OCR tokens (textvqa)",
    )


def _add_strategy_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--strategy",
        default="iterative",
        help="human | iterative | detector | segmenter | sliding-window | patchmap | none",
    )
    parser.add_argument("--ratio", type=float, default=0.9)
    parser.add_argument("--iterations", type=int, default=20)
    parser.add_argument("--conf", type=float, default=0.25, help="detector confidence threshold")
    parser.add_argument("--feed", default="concat", help="concat | crop-only")
    parser.add_argument("--window-fractions", default=None, metavar="F1,F2,...")
    parser.add_argument("--window-stride", type=float, default=0.5)
    parser.add_argument("--patch-threshold", type=float, default=0.5)
    parser.add_argument("--no-full-candidate", action="store_true")


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(cache_dir=args.cache), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    base = _service_url(args)
    payload = {
        "dataset": _dataset_payload(args),
        "strategy": _strategy_payload(args),
        "backends": _backends_payload(args),
        "metric": args.metric,
        "jobs": args.jobs,
        "cache_dir": args.cache,
        "out_dir": args.out,
        "resume": not args.no_resume,
    }
    submitted = _request("POST", f"{base}/runs", payload)
    run_id = submitted["run_id"]
    print(f"run {run_id} submitted (out: {args.out})")

    last_line = ""
    while True:
        status = _request("GET", f"{base}/runs/{run_id}")
        if status["status"] in ("done", "error"):
            break
        line = f"  {status['n_done']}/{status['n_total']} questions"
        if line != last_line:
            print(line)
            last_line = line
        time.sleep(args.poll_interval)

    if status["status"] == "error":
        print(f"run {run_id} failed: {status['error']}", file=sys.stderr)
        return EXIT_FAILURE

    report = _request("GET", f"{base}/runs/{run_id}/report")
    agg = report["aggregates"]
    print(f"evaluated: {agg['overall']['n_evaluated']}  errored: {agg['errors']['n_errored']}")
    print(f"mean accuracy: {agg['overall']['mean_accuracy']:.4f}")
    for group, entry in agg["by_size_group"].items():
        print(f"  {group}: {entry['mean_accuracy']:.4f} (n={entry['n']})")
    print(f"report written under {args.out}")
    return EXIT_SKIPPED_ERRORS if agg["errors"]["n_errored"] > 0 else EXIT_OK


def cmd_timing(args: argparse.Namespace) -> int:
    base = _service_url(args)
    strategies = []
    for kind in args.strategy:
        entry = _strategy_payload(
            argparse.Namespace(**{**vars(args), "strategy": kind})
        )
        strategies.append(entry)
    payload = {
        "dataset": _dataset_payload(args),
        "strategies": strategies,
        "backends": _backends_payload(args),
        "n_warmup": args.warmup,
        "n_measure": args.measure,
    }
    result = _request("POST", f"{base}/timing", payload)
    print("mean crop-stage seconds:")
    for kind, seconds in result["mean_crop_s"].items():
        print(f"  {kind}: {seconds:.4f}")
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    base = _service_url(args)
    payload = {
        "format": args.format,
        "questions_path": args.questions,
        "annotations_path": args.annotations,
        "ocr_path": args.ocr,
        "image_dir": args.images,
        "out_path": args.out,
        "derive_boxes": args.derive_boxes,
    }
    result = _request("POST", f"{base}/ingest", payload)
    print(
        f"wrote {result['n_records']} records to {result['out_path']} "
        f"(skipped {result['n_skipped_missing_image']} with missing images)"
    )
    if result.get("n_without_box") is not None:
        print(f"records without a derivable answer box: {result['n_without_box']}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    base = _service_url(args)
    payload = {"runs": args.runs, "baseline": args.baseline}
    result = _request("POST", f"{base}/reports/aggregate", payload)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        md_path = os.path.join(args.out, "comparison.md")
        with open(md_path, "w", encoding="utf-8") as handle:
            handle.write(result["markdown"])
        for name, content in result["csv"].items():
            with open(os.path.join(args.out, f"{name}.csv"), "w", encoding="utf-8") as handle:
                handle.write(content)
        print(f"comparison written to {args.out}")
    else:
        print(result["markdown"])
    return EXIT_OK


def cmd_conformance(args: argparse.Namespace) -> int:
    from .conformance import run_conformance, summarize

    results = run_conformance(
        args.url, timeout_s=args.timeout, allow_unconfigured=args.allow_unconfigured
    )
    if args.json:
        print(
            json.dumps(
                [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
                indent=2,
            )
        )
    else:
        for r in results:
            mark = "PASS" if r.passed else "FAIL"
            detail = f" ({r.detail})" if r.detail else ""
            print(f"[{mark}] {r.name}{detail}")
    passed, total = summarize(results)
    print(f"{passed}/{total} checks passed")
    return EXIT_OK if passed == total else EXIT_FAILURE


def cmd_fixture(args: argparse.Namespace) -> int:
    from .harness.fixtures import make_synthetic_dataset

    path = make_synthetic_dataset(args.out, n=args.n, seed=args.seed)
    print(f"synthetic dataset written: records:{path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crop-vqa", description=__doc__)
    parser.add_argument("--service", default=None, help=f"service URL (default {DEFAULT_SERVICE})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="start the evaluation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--cache", default=None, help="cache directory for one-shot /crop calls")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("run", help="run an experiment")
    _add_dataset_args(p)
    _add_strategy_args(p)
    _add_backend_args(p)
    p.add_argument("--metric", default="simple", help="simple | official-subsets")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--cache", default=None, help="cache directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-resume", action="store_true")
    p.add_argument("--poll-interval", type=float, default=0.5)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("timing", help="measure crop-stage latency per strategy")
    _add_dataset_args(p)
    _add_backend_args(p)
    p.add_argument(
        "--strategy", action="append", required=True, help="strategy kind (repeatable)"
    )
    p.add_argument("--ratio", type=float, default=0.9)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--conf", type=float, default=0.25)
    p.add_argument("--feed", default="concat")
    p.add_argument("--window-fractions", default=None, metavar="F1,F2,...")
    p.add_argument("--window-stride", type=float, default=0.5)
    p.add_argument("--patch-threshold", type=float, default=0.5)
    p.add_argument("--no-full-candidate", action="store_true")
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--measure", type=int, default=5)
    p.set_defaults(fn=cmd_timing)

    p = sub.add_parser("ingest", help="normalize a raw dataset to records JSONL")
    p.add_argument("--format", choices=("vqav2", "textvqa"), required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--annotations", default=None)
    p.add_argument("--ocr", default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--out", required=True, help="output records file")
    p.add_argument("--derive-boxes", action="store_true")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("report", help="re-aggregate and compare finished runs")
    p.add_argument("--from", dest="runs", nargs="+", required=True, metavar="RUN_DIR")
    p.add_argument("--baseline", default=None, help="baseline run dir for per-type gains")
    p.add_argument("--out", default=None, help="write tables here instead of stdout")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("conformance", help="check a model server against the wire protocol")
    p.add_argument("--url", required=True)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--allow-unconfigured", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_conformance)

    p = sub.add_parser("fixture", help="generate a synthetic dataset for hermetic runs")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_fixture)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
