"""
CLI Parser - argparse definition of every workbench command.

Optional flags default to argparse.SUPPRESS, so the parsed namespace holds only
the flags the user actually passed; everything else comes from the layered
configuration (see workbench.cli.commands.build_run_config).
"""

import argparse
from typing import List, Optional

from core.dictionary import Variant

COMMANDS = ("train", "eval", "sweep", "inspect", "export-atoms", "gen-synthetic", "recovery-score")


def int_list(text: str) -> List[int]:
    """Parse "1,2,5" or a range "1..4" into a list of ints."""
    items: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                low, high = part.split("..", 1)
                items.extend(range(int(low), int(high) + 1))
            else:
                items.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected integers like 1,2,5 or 1..50, got {text!r}")
    return items


def order_list(text: str) -> List[Optional[int]]:
    """Parse co-activation orders; "support" stands for each sample's |S| - 1."""
    orders: List[Optional[int]] = []
    for part in text.split(","):
        part = part.strip()
        if part in ("support", "support-1"):
            orders.append(None)
        elif part:
            orders.extend(int_list(part))
    return orders


def variant_list(text: str) -> List[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    valid = {v.value for v in Variant}
    for name in names:
        if name not in valid:
            raise argparse.ArgumentTypeError(f"unknown variant {name!r} (choose from {', '.join(sorted(valid))})")
    return names


def k_max_from_sweep(text: str) -> int:
    """--k-sweep takes "1..K" (or just K) and yields K."""
    values = int_list(text)
    if not values:
        raise argparse.ArgumentTypeError("empty --k-sweep")
    return max(values)


def _shared_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    shared.add_argument("--seed", type=int, help="Run seed")
    shared.add_argument("--out-dir", dest="out_dir", help="Output directory")
    shared.add_argument("--config", dest="config_file", help="YAML file with parameters (top-level and per-command sections)")
    shared.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return shared


def _data_flags(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--data", required=required, help="MNIST IDX image file or activation container")
    parser.add_argument("--labels", help="MNIST IDX label file (enables stratified --limit)")
    parser.add_argument("--limit", type=int, help="Use at most this many samples")


def _encoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda-l1", dest="lambda_l1", type=float, help="l1 weight (relu)")
    parser.add_argument("--target-l0", dest="target_l0", type=float, help="l0 weight (jumprelu)")
    parser.add_argument("--aux-alpha", dest="aux_alpha", type=float, help="Auxiliary loss weight")
    parser.add_argument("--aux-k", dest="aux_k", type=int, help="Dead atoms used by the auxiliary loss")
    parser.add_argument("--dead-steps-threshold", dest="dead_steps_threshold", type=int)
    parser.add_argument("--ste-bandwidth", dest="ste_bandwidth", type=float)
    parser.add_argument("--tied", action="store_true", help="Shallow encoders reuse D as W")
    parser.add_argument("--absolute-argmax", dest="absolute_argmax", action="store_true", help="MP selects by |D^T r|")
    parser.add_argument("--detach-residual", dest="detach_residual", action="store_true", help="MP coefficients as constants in backprop")
    parser.add_argument("--freeze-b-pre", dest="freeze_b_pre", action="store_true")


def _optimizer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr-init", dest="lr_init", type=float)
    parser.add_argument("--lr-final", dest="lr_final", type=float)
    parser.add_argument("--warmup-steps", dest="warmup_steps", type=int, help="Default: one epoch of steps")
    parser.add_argument("--beta1", type=float)
    parser.add_argument("--beta2", type=float)
    parser.add_argument("--adam-eps", dest="adam_eps", type=float)
    parser.add_argument("--log-every", dest="log_every", type=int, help="Training-log cadence in updates")


def build_parser() -> argparse.ArgumentParser:
    """
    Build the top-level parser.

    Returns:
        ArgumentParser whose namespace carries `command` plus the passed flags
    """
    shared = _shared_flags()
    parser = argparse.ArgumentParser(
        prog="sdl-workbench",
        description="Train and analyze sparse dictionaries (ReLU, JumpReLU, TopK, BatchTopK and MP-SAE).",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    variants = [v.value for v in Variant]

    train = commands.add_parser("train", parents=[shared], argument_default=argparse.SUPPRESS, help="Train a dictionary")
    _data_flags(train)
    train.add_argument("--variant", choices=variants)
    train.add_argument("--k", type=int, help="Target sparsity (MP steps)")
    train.add_argument("--p", type=int, help="Dictionary size")
    _encoder_flags(train)
    _optimizer_flags(train)

    evaluate = commands.add_parser("eval", parents=[shared], argument_default=argparse.SUPPRESS, help="Write the metric CSV bundle")
    evaluate.add_argument("--checkpoint", required=True)
    _data_flags(evaluate)
    evaluate.add_argument("--ks", type=int_list, help="Inference k values for r2.csv, e.g. 5,10,20")
    evaluate.add_argument("--babel-orders", dest="babel_orders", type=int_list, help="Orders for babel_dict.csv")
    evaluate.add_argument("--coact-orders", dest="coact_orders", type=order_list, help="Orders for babel_coact.csv; 'support' = |S|-1")
    evaluate.add_argument("--k-sweep", dest="k_max", type=k_max_from_sweep, help="Residual curve range, e.g. 1..50")

    sweep = commands.add_parser("sweep", parents=[shared], argument_default=argparse.SUPPRESS, help="Train and score a grid")
    _data_flags(sweep)
    sweep.add_argument("--variants", type=variant_list, help="Comma-separated variants")
    sweep.add_argument("--ks", type=int_list)
    sweep.add_argument("--ps", type=int_list)
    sweep.add_argument("--seeds", type=int_list)
    sweep.add_argument("--eval-data", dest="eval_data")
    sweep.add_argument("--eval-labels", dest="eval_labels")
    sweep.add_argument("--eval-limit", dest="eval_limit", type=int)
    sweep.add_argument("--workers", type=int, help="Parallel worker processes")
    _encoder_flags(sweep)
    _optimizer_flags(sweep)

    inspect = commands.add_parser("inspect", parents=[shared], argument_default=argparse.SUPPRESS, help="Trace sample reconstructions")
    inspect.add_argument("--checkpoint", required=True)
    _data_flags(inspect)
    inspect.add_argument("--samples", type=int_list, help="Sample indices, e.g. 0,1,2")
    inspect.add_argument("--k", type=int, help="Inference k")

    export = commands.add_parser("export-atoms", parents=[shared], argument_default=argparse.SUPPRESS, help="Render top atoms")
    export.add_argument("--checkpoint", required=True)
    _data_flags(export, required=False)
    export.add_argument("--top-n", dest="top_n", type=int, help="Atoms per grid (default 25)")
    export.add_argument("--k", type=int, help="Inference k used for ranking")

    synthetic = commands.add_parser("gen-synthetic", parents=[shared], argument_default=argparse.SUPPRESS, help="Generate ground-truth data")
    synthetic.add_argument("--m", type=int, required=True)
    synthetic.add_argument("--p-true", dest="p_true", type=int, required=True)
    synthetic.add_argument("--k-true", dest="k_true", type=int, required=True)
    synthetic.add_argument("--n", type=int, required=True)
    synthetic.add_argument("--coherence-mode", dest="coherence_mode", choices=["orthogonal", "random", "block"])
    synthetic.add_argument("--block-size", dest="block_size", type=int)
    synthetic.add_argument("--within-block-coherence", dest="within_block_coherence", type=float)
    synthetic.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    synthetic.add_argument("--dtype", choices=["f64", "f32"])

    recovery = commands.add_parser("recovery-score", parents=[shared], argument_default=argparse.SUPPRESS, help="Score dictionary recovery")
    recovery.add_argument("--checkpoint", required=True)
    recovery.add_argument("--truth", required=True)
    recovery.add_argument("--threshold", type=float)

    return parser
