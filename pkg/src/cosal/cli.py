"""Command-line client.

Each subcommand builds the same request model the HTTP service accepts and
runs the handler in-process, or against a running service when --server is
given. Exit codes: 0 success, 1 completed with validation failures, 2 hard
errors. COSAL_WORKERS overrides the worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import CosalError
from .service import (
    CoattnRequest,
    EvalRequest,
    EvalResponse,
    PipelineRequest,
    PrDataRequest,
    PrDataResponse,
    StatsRequest,
    StatsResponse,
    TreeRunResponse,
    handle_coattn,
    handle_eval,
    handle_pipeline,
    handle_prdata,
    handle_stats,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ERROR = 2


def _dispatch(server: str | None, path: str, request, handler, response_model):
    if not server:
        return handler(request)
    import httpx

    resp = httpx.post(server.rstrip("/") + path, json=request.model_dump(), timeout=None)
    if resp.status_code != 200:
        raise CosalError(f"service error {resp.status_code}: {resp.text}")
    return response_model.model_validate(resp.json())


def _write(out: str | None, content: str):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_bytes(content.encode())
    else:
        sys.stdout.write(content)


def _cmd_eval(args) -> int:
    request = EvalRequest(gt_root=args.gt, pred_root=args.pred, model=args.model,
                          dataset=args.dataset, format=args.format, workers=args.workers)
    response = _dispatch(args.server, "/eval", request, handle_eval, EvalResponse)
    _write(args.out, response.content)
    for w in response.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_VALIDATION if response.validation_failures else EXIT_OK


def _cmd_stats(args) -> int:
    request = StatsRequest(dataset_root=args.dataset)
    response = _dispatch(args.server, "/stats", request, handle_stats, StatsResponse)
    payload = {"stats": response.stats, "issues": response.issues}
    _write(args.out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return EXIT_VALIDATION if response.validation_failures else EXIT_OK


def _cmd_coattn(args) -> int:
    request = CoattnRequest(features_root=args.features, out_root=args.out,
                            eigvecs=args.eigvecs, workers=args.workers)
    response = _dispatch(args.server, "/coattn", request, handle_coattn, TreeRunResponse)
    print(json.dumps(response.report["errors"] or {"groups": len(response.report["groups"])}))
    return EXIT_VALIDATION if response.validation_failures else EXIT_OK


def _cmd_pipeline(args) -> int:
    request = PipelineRequest(features_root=args.features, priors_root=args.priors,
                              out_root=args.out, alpha=args.alpha, refiner=args.refiner,
                              workers=args.workers)
    response = _dispatch(args.server, "/pipeline", request, handle_pipeline, TreeRunResponse)
    print(json.dumps(response.report["errors"] or {"groups": len(response.report["groups"])}))
    return EXIT_VALIDATION if response.validation_failures else EXIT_OK


def _cmd_prdata(args) -> int:
    request = PrDataRequest(gt_root=args.gt, pred_root=args.pred, model=args.model,
                            workers=args.workers)
    response = _dispatch(args.server, "/prdata", request, handle_prdata, PrDataResponse)
    _write(args.out, response.content)
    return EXIT_VALIDATION if response.validation_failures else EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosal",
                                     description="Co-salient object detection toolbox")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--server", default=None,
                       help="base URL of a running service; default runs in-process")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: COSAL_WORKERS or CPU count)")

    p = sub.add_parser("eval", help="score a prediction tree against GT")
    p.add_argument("--gt", required=True, help="dataset root (gt_object tree)")
    p.add_argument("--pred", required=True, help="prediction root mirroring the GT layout")
    p.add_argument("--model", default="model")
    p.add_argument("--dataset", default=None, help="dataset name for the report")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--format", default="csv", choices=["csv", "json", "md"])
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("coattn", help="write co-attention maps for a feature tree")
    p.add_argument("--features", required=True, help="root of <group>/<image>.coft files")
    p.add_argument("--out", required=True)
    p.add_argument("--eigvecs", type=int, default=1)
    common(p)
    p.set_defaults(func=_cmd_coattn)

    p = sub.add_parser("pipeline", help="full inference: project, refine, fuse")
    p.add_argument("--features", required=True)
    p.add_argument("--priors", required=True, help="root of <group>/<image>.png prior maps")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.99)
    p.add_argument("--refiner", default="ranking", choices=["ranking", "identity"])
    common(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("stats", help="dataset statistics and validation report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("prdata", help="emit dataset-level PR curve data")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--model", default="model")
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=_cmd_prdata)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CosalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (FileNotFoundError, NotADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
