"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Reports go to stdout as CSV unless --report is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench, dispatcher, hmm1d
from .archive import load_model, save_model
from .dataset import (SplitSpec, flatten, load_labeled_images, load_labeled_vectors,
                      load_pgm_file, scan_dataset, split)
from .eigenfaces import EigenModel, train_eigen
from .errors import DataError, FacelabError, NumericError
from .fisherfaces import FisherModel, train_fisher
from .hmm1d import BlockParams, SubjectBank, train_bank

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we reserve 2 for data errors
        raise _UsageError(message)


def _split_arg(text: str) -> tuple[SplitSpec, str]:
    """Parse 'k:N,seed:S[,part:train|test]'."""
    fields = {}
    for piece in text.split(","):
        key, sep, value = piece.partition(":")
        if not sep or key not in ("k", "seed", "part") or key in fields:
            raise argparse.ArgumentTypeError(f"malformed split spec {text!r}")
        fields[key] = value
    if "k" not in fields:
        raise argparse.ArgumentTypeError(f"split spec {text!r} needs k:N")
    try:
        k = int(fields["k"])
        seed = int(fields.get("seed", "0"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer value in split spec {text!r}") from None
    part = fields.get("part", "test")
    if part not in ("train", "test"):
        raise argparse.ArgumentTypeError(f"split part must be train or test, got {part!r}")
    if k < 1:
        raise argparse.ArgumentTypeError("split k must be >= 1")
    return SplitSpec(k=k, seed=seed), part


def _build_parser() -> _Parser:
    parser = _Parser(prog="facelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="train a recognizer (or all of them)")
    p_train.add_argument("--method", required=True, choices=["eigen", "fisher", "hmm", "all"])
    p_train.add_argument("--dataset", required=True, type=Path)
    p_train.add_argument("--out", required=True, type=Path,
                         help="model file, or a directory when --method all")
    p_train.add_argument("--split", type=_split_arg, default=None,
                         help="train on the train half of k:N,seed:S")
    p_train.add_argument("--k", type=int, default=40, help="eigenface components requested")
    p_train.add_argument("--states", type=int, default=hmm1d.DEFAULT_STATES)
    p_train.add_argument("--block-l", type=int, default=hmm1d.DEFAULT_BLOCK_HEIGHT)
    p_train.add_argument("--overlap", type=int, default=hmm1d.DEFAULT_OVERLAP)
    p_train.add_argument("--klt-d", type=int, default=hmm1d.DEFAULT_KLT_DIM)
    p_train.add_argument("--features", choices=[hmm1d.FEATURE_KLT, hmm1d.FEATURE_RAW],
                         default=hmm1d.FEATURE_KLT)
    p_train.add_argument("--frontal-ref", type=Path, default=None,
                         help="representative frontal image (--method all only)")
    p_train.set_defaults(func=_cmd_train)

    p_rec = sub.add_parser("recognize", help="classify one image")
    p_rec.add_argument("--model", required=True, type=Path,
                       help="model file, or the models directory with --multi")
    p_rec.add_argument("--image", required=True, type=Path)
    p_rec.add_argument("--policy", type=Path, default=None)
    p_rec.add_argument("--multi", action="store_true",
                       help="profile the image and dispatch to a recognizer")
    p_rec.set_defaults(func=_cmd_recognize)

    p_eval = sub.add_parser("evaluate", help="error report over a dataset")
    p_eval.add_argument("--model", required=True, type=Path)
    p_eval.add_argument("--dataset", required=True, type=Path)
    p_eval.add_argument("--split", type=_split_arg, default=None,
                        help="evaluate on one half of k:N,seed:S[,part:train|test]")
    p_eval.add_argument("--report", type=Path, default=None)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_assess = sub.add_parser("assess", help="print a probe's profile and chosen method")
    p_assess.add_argument("--models", required=True, type=Path)
    p_assess.add_argument("--policy", required=True, type=Path)
    p_assess.add_argument("--image", required=True, type=Path)
    p_assess.set_defaults(func=_cmd_assess)

    p_inspect = sub.add_parser("inspect", help="dump model metadata")
    p_inspect.add_argument("--model", required=True, type=Path)
    p_inspect.set_defaults(func=_cmd_inspect)
    return parser


def _train_split(args):
    manifest = scan_dataset(args.dataset)
    if args.split is not None:
        spec, _ = args.split
        manifest, _ = split(manifest, spec)
    return manifest


def _hmm_params(args, dims) -> BlockParams:
    return BlockParams(args.block_l, args.overlap, dims)


def _cmd_train(args) -> int:
    manifest = _train_split(args)
    dims = manifest.dims
    if args.method in ("eigen", "fisher"):
        vectors = load_labeled_vectors(manifest)
        model = (train_eigen(vectors, args.k, dims) if args.method == "eigen"
                 else train_fisher(vectors, dims))
        save_model(model, args.out)
        print(f"saved,{args.method},{args.out}")
        return EXIT_OK
    entries = load_labeled_images(manifest)
    images = [(label, img) for label, _, img in entries]
    if args.method == "hmm":
        bank = train_bank(images, _hmm_params(args, dims), args.states, args.klt_d,
                          feature_mode=args.features)
        save_model(bank, args.out)
        print(f"saved,hmm,{args.out}")
        return EXIT_OK

    # --method all: three models plus a calibrated dispatch policy
    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    vectors = [(label, flatten(img)) for label, _, img in entries]
    eigen = train_eigen(vectors, args.k, dims)
    fisher = train_fisher(vectors, dims)
    bank = train_bank(images, _hmm_params(args, dims), args.states, args.klt_d,
                      feature_mode=args.features)
    train_images = [img for _, _, img in entries]
    context = dispatcher.calibrate_context(train_images, bank)
    if args.frontal_ref is not None:
        ref_path = args.frontal_ref
        ref_image = load_pgm_file(ref_path)
        if (ref_image.h, ref_image.w) != dims:
            raise DataError(f"frontal reference dims {(ref_image.h, ref_image.w)} != {dims}")
    else:
        idx = dispatcher.frontal_ref_index(train_images, context)
        ref_path = entries[idx][1]
        ref_image = entries[idx][2]
    frontal = flatten(ref_image)
    policy = dispatcher.calibrate_policy(train_images, eigen, frontal, bank, context)
    save_model(eigen, out_dir / "eigen.ffm")
    save_model(fisher, out_dir / "fisher.ffm")
    save_model(bank, out_dir / "hmm.ffm")
    dispatcher.write_policy_file(out_dir / "policy.cfg", policy, context, str(ref_path))
    print(f"saved,all,{out_dir}")
    return EXIT_OK


def _load_multi(models_dir: Path) -> tuple[EigenModel, FisherModel, SubjectBank]:
    eigen = load_model(models_dir / "eigen.ffm")
    fisher = load_model(models_dir / "fisher.ffm")
    bank = load_model(models_dir / "hmm.ffm")
    if not isinstance(eigen, EigenModel) or not isinstance(fisher, FisherModel) \
            or not isinstance(bank, SubjectBank):
        raise DataError(f"{models_dir}: unexpected model types in eigen/fisher/hmm files")
    return eigen, fisher, bank


def _cmd_recognize(args) -> int:
    image = load_pgm_file(args.image)
    if args.multi:
        if args.policy is None:
            raise _UsageError("--multi requires --policy")
        policy, context, ref_path = dispatcher.read_policy_file(args.policy)
        eigen, fisher, bank = _load_multi(args.model)
        frontal = flatten(load_pgm_file(Path(ref_path)))
        method, label, _ = dispatcher.recognize_multi(
            eigen, fisher, bank, frontal, policy, context, image)
        print(f"{args.image},{method},{label}")
        return EXIT_OK
    model = load_model(args.model)
    prediction, score = bench.predict(model, image)
    print(f"{args.image},{prediction},{format(score, '.17g')}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    manifest = scan_dataset(args.dataset)
    desc = "full"
    if args.split is not None:
        spec, part = args.split
        train_m, test_m = split(manifest, spec)
        manifest = train_m if part == "train" else test_m
        desc = f"k={spec.k},seed={spec.seed},part={part}"
    report = bench.evaluate(model, manifest, desc)
    csv_text = bench.report_to_csv(report)
    if args.report is not None:
        args.report.write_text(csv_text, encoding="utf-8")
        print(f"error_rate,{format(report.error_rate, '.17g')}")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _cmd_assess(args) -> int:
    policy, context, ref_path = dispatcher.read_policy_file(args.policy)
    eigen, _, bank = _load_multi(args.models)
    frontal = flatten(load_pgm_file(Path(ref_path)))
    image = load_pgm_file(args.image)
    prof = dispatcher.profile(image, eigen, frontal, bank, context)
    method = dispatcher.select(prof, policy)
    print(f"pose_deviation,{format(prof.pose_deviation, '.17g')}")
    print(f"illumination_deviation,{format(prof.illumination_deviation, '.17g')}")
    print(f"occlusion_degree,{format(prof.occlusion_degree, '.17g')}")
    print(f"method,{method}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    model = load_model(args.model)
    if isinstance(model, EigenModel):
        print("method,eigen")
        print(f"dims,{model.dims[0]},{model.dims[1]}")
        print(f"components,{model.k}")
        print(f"theta_face,{format(model.theta_face, '.17g')}")
        print(f"theta_known,{format(model.theta_known, '.17g')}")
        labels = model.labels
    elif isinstance(model, FisherModel):
        print("method,fisher")
        print(f"dims,{model.dims[0]},{model.dims[1]}")
        print(f"discriminants,{model.m}")
        labels = model.labels
    else:
        print("method,hmm")
        dims = model.params.image_dims
        print(f"dims,{dims[0]},{dims[1]}")
        print(f"states,{next(iter(model.models.values())).n_states}")
        print(f"block_height,{model.params.height}")
        print(f"overlap,{model.params.overlap}")
        print(f"features,{model.feature_mode}")
        print(f"detector,{int(model.detector is not None)}")
        labels = model.labels
    print(f"labels,{' '.join(labels)}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FacelabError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
