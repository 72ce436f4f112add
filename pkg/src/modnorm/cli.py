"""Command-line client for the experiment service.

Subcommands (`generate`, `train`, `gap`, `report`) build an HTTP request and
send it to the service: either a remote server given with --server, or the
in-process application over an ASGI transport when no server is specified.
`serve` runs the service standalone.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="experiment config file (key=value sections)")
    parser.add_argument("--seed", type=int, action="append", metavar="N",
                        help="override the seed list (repeatable)")
    parser.add_argument("--out", metavar="DIR", help="override the output directory")
    parser.add_argument("--server", metavar="URL",
                        help="send the request to a running service instead of in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modnorm",
                                     description="Two-modality normalization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the synthetic dataset blob and manifest")
    _add_common(p)
    p.add_argument("--dataset-seed", type=int, metavar="N", help="override the dataset rng seed")

    p = sub.add_parser("train", help="train every (configuration, seed) pair and summarize")
    _add_common(p)
    p.add_argument("--norm-backbone", metavar="KIND",
                   help="override: backbone norm kind (BN, MBN_shared, MBN_specific)")
    p.add_argument("--norm-head", metavar="KIND", help="override: head norm kind")

    p = sub.add_parser("gap", help="emit distribution-gap CSV bundle")
    _add_common(p)

    p = sub.add_parser("report", help="merge output CSVs into a Markdown report")
    p.add_argument("--out", metavar="DIR", required=True)
    p.add_argument("--server", metavar="URL")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient
    from .service.app import app
    return TestClient(app, raise_server_exceptions=False)


def _post(args, endpoint: str, payload: dict) -> int:
    with _client(getattr(args, "server", None)) as client:
        response = client.post(endpoint, json=payload)
    body = response.json()
    if response.status_code != 200:
        kind = body.get("error_kind", "HTTPError")
        message = body.get("message", json.dumps(body))
        print(f"MODNORM_ERROR kind={kind} msg={json.dumps(message)}", file=sys.stderr)
        return 1
    print(json.dumps(body, indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn
        from .service.app import app
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    if args.command == "report":
        return _post(args, "/api/report", {"out_dir": args.out})

    payload = {
        "config_path": args.config,
        "seeds": args.seed,
        "out_dir": args.out,
    }
    if args.command == "generate":
        payload["dataset_seed"] = args.dataset_seed
        return _post(args, "/api/generate", payload)
    if args.command == "train":
        payload["norm_backbone"] = args.norm_backbone
        payload["norm_head"] = args.norm_head
        return _post(args, "/api/train", payload)
    if args.command == "gap":
        return _post(args, "/api/gap", payload)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
