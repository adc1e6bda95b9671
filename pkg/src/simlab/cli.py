"""Command-line interface mirroring the HTTP API one-to-one.

    simlab serve --data-dir DIR [--port N] [--token T] [--max-workers N]
    simlab register-system --manifest FILE [--server URL] [--token T]
    simlab submit --config FILE [--server URL] [--token T] [--wait]
    simlab status ID [--server URL]
    simlab leaderboard --task NAME [--sort METRIC] [--order asc|desc]
    simlab download ID [--out FILE] [--server URL]
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import requests

from .service import Service, ServiceConfig

DEFAULT_SERVER = "http://127.0.0.1:8080"
TERMINAL_STATUSES = {"DONE", "FAILED"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simlab",
        description="Simulation-based evaluation platform for conversational agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the platform service")
    serve.add_argument("--data-dir", default="./simlab-data")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--max-workers", type=int, default=2)
    serve.add_argument("--token", default=os.environ.get("SIMLAB_TOKEN", ""))
    serve.add_argument("--ui-dir", default=None, help="built web client to serve at /")

    register = sub.add_parser("register-system", help="register an agent or simulator")
    register.add_argument("--manifest", required=True, help="system record JSON file")
    _client_args(register, token=True)

    submit = sub.add_parser("submit", help="submit an experiment")
    submit.add_argument("--config", required=True, help="experiment config JSON file")
    submit.add_argument("--wait", action="store_true", help="poll until terminal")
    _client_args(submit, token=True)

    status = sub.add_parser("status", help="show one experiment's state")
    status.add_argument("experiment_id")
    _client_args(status)

    leaderboard = sub.add_parser("leaderboard", help="show the leaderboard for a task")
    leaderboard.add_argument("--task", required=True)
    leaderboard.add_argument("--sort", default=None, metavar="METRIC")
    leaderboard.add_argument("--order", choices=("asc", "desc"), default="desc")
    _client_args(leaderboard)

    download = sub.add_parser("download", help="download an experiment's results document")
    download.add_argument("experiment_id")
    download.add_argument("--out", default=None, help="write to file instead of stdout")
    _client_args(download)

    return parser


def _client_args(parser: argparse.ArgumentParser, token: bool = False) -> None:
    parser.add_argument("--server", default=os.environ.get("SIMLAB_SERVER", DEFAULT_SERVER))
    if token:
        parser.add_argument("--token", default=os.environ.get("SIMLAB_TOKEN", ""))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except requests.exceptions.ConnectionError:
        print(f"error: cannot reach server at {args.server}", file=sys.stderr)
        return 1


def _cmd_serve(args) -> int:
    service = Service(
        ServiceConfig(
            data_dir=args.data_dir,
            port=args.port,
            host=args.host,
            max_workers=args.max_workers,
            api_token=args.token,
            ui_dir=args.ui_dir,
        )
    )
    print(f"simlab service on http://{args.host}:{service.port} (data: {args.data_dir})")
    if not args.token:
        print(f"api token: {service.api_token}")
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        print("shutting down...")
    finally:
        service.stop(drain=False)
    return 0


def _cmd_register(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    resp = requests.post(
        f"{args.server}/api/systems", json=manifest, headers=_auth(args.token), timeout=30
    )
    return _report(resp)


def _cmd_submit(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        config = json.load(fh)
    resp = requests.post(
        f"{args.server}/api/experiments", json=config, headers=_auth(args.token), timeout=30
    )
    code = _report(resp)
    if code != 0 or not args.wait:
        return code
    experiment_id = resp.json()["experiment_id"]
    while True:
        state = requests.get(f"{args.server}/api/experiments/{experiment_id}", timeout=30)
        state.raise_for_status()
        doc = state.json()
        print(f"{experiment_id}: {doc['status']} ({doc['progress']:.0%})", file=sys.stderr)
        if doc["status"] in TERMINAL_STATUSES:
            print(json.dumps(doc, indent=2))
            return 0 if doc["status"] == "DONE" else 1
        time.sleep(2)


def _cmd_status(args) -> int:
    resp = requests.get(f"{args.server}/api/experiments/{args.experiment_id}", timeout=30)
    return _report(resp)


def _cmd_leaderboard(args) -> int:
    params = {"order": args.order}
    if args.sort:
        params["sort"] = args.sort
    resp = requests.get(
        f"{args.server}/api/leaderboard/{args.task}", params=params, timeout=30
    )
    if resp.status_code != 200:
        return _report(resp)
    rows = resp.json()["rows"]
    if not rows:
        print("no results yet")
        return 0
    metrics = sorted({m for row in rows for m in row["metrics"]})
    header = ["agent", "simulator"] + metrics + ["conversations"]
    print("\t".join(header))
    for row in rows:
        cells = [
            f"{row['agent']['name']}@{row['agent']['version']}",
            f"{row['simulator']['name']}@{row['simulator']['version']}",
        ]
        counts = set()
        for metric in metrics:
            entry = row["metrics"].get(metric)
            cells.append(f"{entry['mean']:.3f}" if entry else "-")
            if entry:
                counts.add(entry["count"])
        cells.append(str(max(counts)) if counts else "0")
        print("\t".join(cells))
    return 0


def _cmd_download(args) -> int:
    resp = requests.get(
        f"{args.server}/api/experiments/{args.experiment_id}/results", timeout=30
    )
    if resp.status_code != 200:
        return _report(resp)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(resp.content)
        print(f"wrote {len(resp.content)} bytes to {args.out}")
    else:
        sys.stdout.buffer.write(resp.content)
    return 0


def _auth(token: str) -> dict[str, str]:
    return {"Authorization": f"Bearer {token}"} if token else {}


def _report(resp: requests.Response) -> int:
    try:
        body = json.dumps(resp.json(), indent=2)
    except ValueError:
        body = resp.text
    if 200 <= resp.status_code < 300:
        print(body)
        return 0
    print(f"error ({resp.status_code}): {body}", file=sys.stderr)
    return 1


_COMMANDS = {
    "serve": _cmd_serve,
    "register-system": _cmd_register,
    "submit": _cmd_submit,
    "status": _cmd_status,
    "leaderboard": _cmd_leaderboard,
    "download": _cmd_download,
}


if __name__ == "__main__":
    raise SystemExit(main())
