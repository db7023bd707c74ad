"""Command-line entry point.

One subcommand, ``export``, turns a model spec plus an image folder and
a perturbation list into a cte experiment folder.  Exit codes follow the
cte convention: 0 success, 2 OS-level I/O failure, 3 contract violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from cte_adapter import __version__
from cte_adapter.errors import AdapterError
from cte_adapter.export import AdapterContract, export_predictions
from cte_adapter.models import load_model_specs


def _cmd_export(args) -> None:
    spec_path = Path(args.model)
    specs = load_model_specs(spec_path)
    contract = AdapterContract(
        model_specs=tuple(specs),
        spec_dir=spec_path.parent,
        images_dir=Path(args.images),
        perturbations_path=Path(args.perturbations),
        out_dir=Path(args.out),
        cte_bin=args.cte_bin,
        dataset_id=args.dataset_id,
    )
    manifest_path = export_predictions(contract)
    print(f"wrote experiment folder with manifest {manifest_path}")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cte-adapter",
        description="run segmentation models and export cte experiment folders",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="run models on clean and perturbed inputs")
    p.add_argument("--model", required=True, help="JSON model spec (object or list)")
    p.add_argument("--images", required=True, help="directory of input .npy images")
    p.add_argument("--perturbations", required=True, help="JSON list of perturbation specs")
    p.add_argument("--out", required=True, help="experiment folder to create")
    p.add_argument("--cte-bin", default="cte", dest="cte_bin",
                   help="cte executable used for input-space perturbations")
    p.add_argument("--dataset-id", default="", dest="dataset_id")
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        args.func(args)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
