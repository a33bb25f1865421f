"""Command-line interface: extract, train, eval, synth.

Exit codes: 0 success, 2 usage or parameter errors, 3 missing or
malformed data, 4 numerical failure, 5 dataset-protocol violation.
Progress goes to stderr; results go to stdout and the requested output
files. Runs with identical flags and seed write identical bytes; a
``created`` timestamp is recorded only when SOURCE_DATE_EPOCH is set.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    LeastSquaresClassifier,
    LinearSVMClassifier,
    format_confusion,
    format_report_table,
    recognition_report,
)
from .data import (
    ModelArchive,
    MultiViewFeatureMatrix,
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    labels_for_task,
    load_annotation,
    load_features,
    load_image,
    load_labels,
    load_manifest,
    load_model,
    save_features,
    save_labels,
    save_model,
    save_synthetic_truth,
    split_dataset,
    split_labeled,
)
from .errors import (
    DataError,
    DimensionError,
    NumericError,
    ParameterError,
    ProtocolError,
)
from .gabor import (
    REGIONS,
    FeatureVector,
    GaborParams,
    build_bank,
    extract_features,
    normalize_features,
    partition_by_orientation,
    partition_by_region,
)
from .solver import SolverConfig, encode, fit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_PROTOCOL = 5

_METHODS = ("gmcfa", "mogfa", "whole")


def _method_value(value):
    if value in _METHODS:
        return value
    if value.startswith("single:") and value[len("single:") :]:
        return value
    raise argparse.ArgumentTypeError(
        f"method must be one of {', '.join(_METHODS)} or single:<view>, got {value!r}"
    )


def _split_value(value):
    if value in ("all", "paper"):
        return value
    if value.startswith("ratio:"):
        try:
            ratio = float(value[len("ratio:") :])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad ratio in {value!r}") from None
        if not 0.0 < ratio < 1.0:
            raise argparse.ArgumentTypeError(f"ratio must lie in (0, 1), got {ratio}")
        return value
    raise argparse.ArgumentTypeError(
        f"split must be all, paper, or ratio:<fraction>, got {value!r}"
    )


def _float_list(value):
    try:
        items = [float(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {value!r}") from None
    if not items:
        raise argparse.ArgumentTypeError("empty number list")
    return items


def _int_list(value):
    try:
        items = [int(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {value!r}") from None
    if not items:
        raise argparse.ArgumentTypeError("empty integer list")
    return items


def _snr_value(value):
    if value.lower() in ("none", "inf", "noiseless"):
        return None
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR {value!r}") from None


def _progress(args, message):
    if not getattr(args, "quiet", False):
        print(message, file=sys.stderr)


def _base_metadata(args):
    meta = {"seed": int(args.seed)}
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    if stamp is not None:
        meta["created"] = int(stamp)
    return meta


def _add_gabor_flags(parser):
    group = parser.add_argument_group("gabor bank")
    group.add_argument("--kmax", type=float, default=GaborParams().k_max,
                       help="carrier frequency of the finest scale (rad/px)")
    group.add_argument("--f", type=float, default=GaborParams().scale_factor,
                       help="spacing factor between scales")
    group.add_argument("--sigma", type=float, default=GaborParams().sigma,
                       help="envelope width parameter")
    group.add_argument("--scales", type=int, default=5, help="number of scales")
    group.add_argument("--orientations", type=int, default=8,
                       help="number of orientations")
    group.add_argument("--window-radius", type=int, default=None,
                       help="fixed kernel half-width in pixels (default: auto per scale)")


def _gabor_params(args):
    return GaborParams(
        k_max=args.kmax,
        scale_factor=args.f,
        sigma=args.sigma,
        num_scales=args.scales,
        num_orientations=args.orientations,
        window_radius=args.window_radius,
    )


def _add_solver_flags(parser):
    group = parser.add_argument_group("solver")
    group.add_argument("--atoms", type=int, default=32,
                       help="total dictionary atoms")
    group.add_argument("--lambda", dest="lam", type=float, default=0.01,
                       help="atom penalty weight")
    group.add_argument("--gamma", type=float, default=0.01,
                       help="code-row penalty weight")
    group.add_argument("--outer-tol", type=float, default=1e-4,
                       help="relative objective tolerance of the alternation")
    group.add_argument("--inner-tol", type=float, default=1e-6,
                       help="relative objective tolerance of the inner solves")
    group.add_argument("--outer-max", type=int, default=100,
                       help="outer iteration cap")
    group.add_argument("--inner-max", type=int, default=200,
                       help="inner iteration cap")


# ---------------------------------------------------------------------------
# extract


def cmd_extract(args):
    manifest = load_manifest(args.manifest)
    params = _gabor_params(args)
    bank = build_bank(params)
    expected_points = args.points if args.points > 0 else None
    reference_mask = None
    columns = []
    sample_ids = []
    failures = []
    for entry in manifest:
        try:
            image = load_image(entry.image_path)
            mask = load_annotation(entry.annotation_path, expected_points=expected_points)
            if reference_mask is None:
                reference_mask = mask
            elif mask.regions != reference_mask.regions:
                raise DataError(
                    f"{entry.annotation_path}: landmark labels disagree with the"
                    f" first annotation; all images must share one layout"
                )
            fv = extract_features(image, mask, bank, border=args.border)
            values = normalize_features(fv.values, mode=args.normalize)
            normalized = FeatureVector(values, fv.layout)
            if args.method == "gmcfa":
                views = partition_by_region(normalized, mask)
            elif args.method == "mogfa":
                views = partition_by_orientation(normalized)
            else:
                views = [values]
            columns.append(views)
            sample_ids.append(entry.image_path)
        except (DataError, ParameterError, OSError) as exc:
            failures.append((entry.image_path, exc))
            _progress(args, f"failed {entry.image_path}: {exc}")
    if failures:
        for image_path, exc in failures:
            print(f"error: {image_path}: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.method == "gmcfa":
        view_names = list(REGIONS)
        descriptor = "region"
    elif args.method == "mogfa":
        view_names = [f"ori{u}" for u in range(params.num_orientations)]
        descriptor = "orientation"
    else:
        view_names = ["whole"]
        descriptor = "whole"
    views = [
        np.column_stack([c[p] for c in columns]) for p in range(len(view_names))
    ]
    features = MultiViewFeatureMatrix(
        views, sample_ids, view_names, descriptor, params.to_dict()
    )
    save_features(args.output, features)
    for name, dim in zip(features.view_names, features.view_dims):
        print(f"view {name}: {dim}")
    print(f"samples: {features.n_samples}")
    print(f"written: {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _load_truth_labels(args, sample_ids):
    """Labels for the given samples from --manifest/--task or --labels."""
    if getattr(args, "manifest", None):
        manifest = load_manifest(args.manifest)
        ids, labels = labels_for_task(manifest, args.task)
        table = dict(zip(ids, labels))
    elif getattr(args, "labels", None):
        table = load_labels(args.labels)
    else:
        raise ParameterError("labels are required: pass --manifest (with --task) or --labels")
    missing = [s for s in sample_ids if s not in table]
    if missing:
        raise DataError(f"no label for sample {missing[0]!r} ({len(missing)} missing)")
    return [table[s] for s in sample_ids]


def _apply_method(features, method):
    if method is None:
        return features
    if method.startswith("single:"):
        return features.restrict_to_view(method[len("single:") :])
    wanted = {"gmcfa": "region", "mogfa": "orientation", "whole": "whole"}[method]
    if features.descriptor.split(":")[0] != wanted:
        raise ParameterError(
            f"method {method} expects features partitioned as {wanted!r},"
            f" but the file says {features.descriptor!r}"
        )
    return features


def _resolve_split(args, features, labels):
    if args.split == "all":
        return list(features.sample_ids), []
    if args.split.startswith("ratio:"):
        spec = SplitSpec(
            mode="ratio", seed=args.seed, ratio=float(args.split[len("ratio:") :])
        )
        return split_labeled(features.sample_ids, labels, spec)
    # paper protocol needs the subject structure of a manifest
    if not getattr(args, "manifest", None):
        raise ParameterError("--split paper requires --manifest")
    manifest = load_manifest(args.manifest)
    keep = set(features.sample_ids)
    manifest = [e for e in manifest if e.image_path in keep]
    covered = {e.image_path for e in manifest}
    missing = [s for s in features.sample_ids if s not in covered]
    if missing:
        raise DataError(f"manifest is missing feature sample {missing[0]!r}")
    return split_dataset(manifest, SplitSpec(mode="paper_protocol", seed=args.seed))


def _train_classifiers(args, train_rows, train_labels):
    out = {}
    if args.classifier in ("ls", "both"):
        out["ls"] = LeastSquaresClassifier(ridge=args.ridge).fit(train_rows, train_labels)
    if args.classifier in ("svm", "both"):
        out["svm"] = LinearSVMClassifier(
            C=args.svm_c, epochs=args.svm_epochs, seed=args.seed
        ).fit(train_rows, train_labels)
    return out


def _score(classifiers, rows, labels):
    rates = {}
    for name, clf in classifiers.items():
        report = recognition_report(clf.predict(rows), labels, class_names=list(clf.classes_))
        rates[name] = report.overall
    return rates


def _write_trace_csv(path, trace):
    lines = ["iteration,total,fit_term,dict_penalty,code_penalty"]
    for i, b in enumerate(trace.breakdowns):
        lines.append(
            f"{i},{b.total!r},{b.fit_term!r},{b.dict_penalty!r},{b.code_penalty!r}"
        )
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())


def cmd_train(args):
    features = load_features(args.features)
    features = _apply_method(features, args.method)
    labels = _load_truth_labels(args, features.sample_ids)
    train_ids, test_ids = _resolve_split(args, features, labels)
    if not train_ids:
        raise ParameterError("the split left no training samples")
    label_of = dict(zip(features.sample_ids, labels))
    train_set = features.select_ids(train_ids)
    train_labels = [label_of[s] for s in train_ids]
    test_set = features.select_ids(test_ids) if test_ids else None
    test_labels = [label_of[s] for s in test_ids]
    n_classes = len(set(labels))

    lam_grid = args.sweep_lambda or [args.lam]
    gamma_grid = args.sweep_gamma or [args.gamma]
    if args.sweep_atoms:
        # sweep values count atoms per class; the dictionary size scales
        # with how many classes the task distinguishes
        atoms_grid = [v * n_classes for v in args.sweep_atoms]
    else:
        atoms_grid = [args.atoms]
    combos = [
        (lam, gamma, n_atoms)
        for lam in lam_grid
        for gamma in gamma_grid
        for n_atoms in atoms_grid
    ]
    if len(combos) > 1 and test_set is None:
        raise ParameterError("sweeps need a held-out part; use --split ratio:... or paper")

    best = None
    summary_rows = []
    for lam, gamma, n_atoms in combos:
        config = SolverConfig(
            n_atoms=n_atoms,
            lam=lam,
            gamma=gamma,
            outer_tol=args.outer_tol,
            outer_max_iters=args.outer_max,
            inner_tol=args.inner_tol,
            inner_max_iters=args.inner_max,
            rng_seed=args.seed,
        )
        _progress(args, f"fit lam={lam} gamma={gamma} atoms={n_atoms}")
        dictionaries, codes, trace = fit(train_set.views, config)
        classifiers = _train_classifiers(args, codes.T, train_labels)
        if test_set is not None:
            test_codes = encode(test_set.views, dictionaries, gamma, config)
            rates = _score(classifiers, test_codes.T, test_labels)
        else:
            rates = _score(classifiers, codes.T, train_labels)
        primary = "svm" if "svm" in classifiers else "ls"
        summary_rows.append((lam, gamma, n_atoms, rates))
        _progress(
            args,
            "  "
            + " ".join(f"{name}={rates[name]:.2f}" for name in sorted(rates))
            + f" ({trace.termination}, {len(trace.breakdowns) - 1} outer iterations)",
        )
        candidate = (rates[primary], dictionaries, config, classifiers, trace, (lam, gamma, n_atoms))
        if best is None or candidate[0] > best[0]:
            best = candidate

    _, dictionaries, config, classifiers, trace, chosen = best
    gabor_params = None
    if features.gabor_info is not None:
        gabor_params = GaborParams(**features.gabor_info)
    metadata = _base_metadata(args)
    metadata.update(
        {
            "train_ids": list(train_ids),
            "test_ids": list(test_ids),
            "chosen": {"lam": chosen[0], "gamma": chosen[1], "n_atoms": chosen[2]},
        }
    )
    archive = ModelArchive(
        dictionaries=dictionaries,
        solver_config=config,
        descriptor=features.descriptor,
        view_names=list(features.view_names),
        gabor_params=gabor_params,
        normalize=args.normalize,
        classifiers=classifiers,
        metadata=metadata,
    )
    save_model(args.output, archive)
    trace_path = args.trace or f"{args.output}.trace.csv"
    _write_trace_csv(trace_path, trace)
    if len(combos) > 1:
        sweep_path = f"{args.output}.sweep.csv"
        lines = ["lam,gamma,n_atoms,ls_rate,svm_rate"]
        for lam, gamma, n_atoms, rates in summary_rows:
            ls_rate = repr(rates["ls"]) if "ls" in rates else "NA"
            svm_rate = repr(rates["svm"]) if "svm" in rates else "NA"
            lines.append(f"{lam!r},{gamma!r},{n_atoms},{ls_rate},{svm_rate}")
        Path(sweep_path).write_bytes(("\n".join(lines) + "\n").encode())
        print(f"sweep: {sweep_path}")
    lam, gamma, n_atoms = chosen
    print(f"chosen: lam={lam} gamma={gamma} atoms={n_atoms}")
    for name, rate in sorted(_collect_rates(summary_rows, chosen).items()):
        print(f"{name} rate: {rate:.2f}")
    print(f"model: {args.output}")
    print(f"trace: {trace_path}")
    return EXIT_OK


def _collect_rates(summary_rows, chosen):
    for lam, gamma, n_atoms, rates in summary_rows:
        if (lam, gamma, n_atoms) == chosen:
            return rates
    return {}


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args):
    archive = load_model(args.model)
    features = load_features(args.features)
    if archive.descriptor.startswith("single:") and features.n_views > 1:
        view_name = archive.descriptor[len("single:") :].split(" ")[0]
        features = features.restrict_to_view(view_name)
    archive.check_features(features)
    labels = _load_truth_labels(args, features.sample_ids)
    label_of = dict(zip(features.sample_ids, labels))
    if args.split == "archive":
        test_ids = [s for s in archive.metadata.get("test_ids", []) if s in label_of]
        if not test_ids:
            raise ParameterError(
                "the model archive records no test samples present in this feature"
                " file; use --split all"
            )
        features = features.select_ids(test_ids)
    truth = [label_of[s] for s in features.sample_ids]
    config = archive.solver_config
    codes = encode(features.views, archive.dictionaries, config.gamma, config)
    rows = []
    reports = {}
    for name in sorted(archive.classifiers):
        clf = archive.classifiers[name]
        predictions = clf.predict(codes.T)
        report = recognition_report(predictions, truth, class_names=list(clf.classes_))
        reports[name] = report
        rows.append((name.upper(), report))
    table_text = format_report_table(rows, fmt="text")
    table_csv = format_report_table(rows, fmt="csv")
    sys.stdout.write(table_csv if args.format == "csv" else table_text)
    if args.format == "text":
        for name in sorted(reports):
            sys.stdout.write(format_confusion(reports[name], label=name.upper()))
    if args.output:
        Path(f"{args.output}.txt").write_bytes(table_text.encode())
        Path(f"{args.output}.csv").write_bytes(table_csv.encode())
        confusion_text = "".join(
            format_confusion(reports[name], label=name.upper()) for name in sorted(reports)
        )
        Path(f"{args.output}.confusion.txt").write_bytes(confusion_text.encode())
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args):
    dims = args.dims
    if len(dims) == 1:
        dims = dims * args.views
    spec = SyntheticSpec(
        n_views=args.views,
        view_dims=tuple(dims),
        n_atoms=args.atoms,
        n_samples=args.samples,
        sparsity=args.sparsity,
        snr_db=args.snr,
        n_classes=args.classes,
        class_separation=args.separation,
        seed=args.seed,
    )
    features, dictionaries, codes, labels = generate_synthetic(spec)
    prefix = str(args.output_prefix)
    feat_path = f"{prefix}.feat"
    labels_path = f"{prefix}.labels.csv"
    truth_path = f"{prefix}.truth"
    save_features(feat_path, features)
    save_labels(labels_path, features.sample_ids, [str(v) for v in labels])
    save_synthetic_truth(truth_path, spec, dictionaries, codes, labels)
    for name, dim in zip(features.view_names, features.view_dims):
        print(f"view {name}: {dim}")
    print(f"samples: {features.n_samples}")
    print(f"features: {feat_path}")
    print(f"labels: {labels_path}")
    print(f"truth: {truth_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvsc",
        description="Multi-view sparse coding over Gabor point features.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser(
        "extract", help="extract per-view Gabor features from a dataset manifest"
    )
    p_extract.add_argument("manifest", help="dataset manifest CSV")
    p_extract.add_argument("--method", type=_method_value, default="gmcfa",
                           help="view partition: gmcfa (regions), mogfa (orientations), whole")
    p_extract.add_argument("--output", required=True, help="feature container to write")
    p_extract.add_argument("--normalize", choices=("unit", "none"), default="unit",
                           help="per-image feature normalization")
    p_extract.add_argument("--border", choices=("strict", "pad"), default="strict",
                           help="window behavior at image borders")
    p_extract.add_argument("--points", type=int, default=122,
                           help="expected landmark count (0 to accept any)")
    p_extract.add_argument("--quiet", action="store_true")
    _add_gabor_flags(p_extract)
    p_extract.set_defaults(func=cmd_extract)

    p_train = sub.add_parser("train", help="learn dictionaries, codes, and classifiers")
    p_train.add_argument("--features", required=True, help="feature container")
    p_train.add_argument("--manifest", help="manifest CSV supplying labels and subjects")
    p_train.add_argument("--task", choices=("fer", "fr"), default="fer",
                         help="label source when using --manifest")
    p_train.add_argument("--labels", help="sample_id,label CSV (alternative to --manifest)")
    p_train.add_argument("--method", type=_method_value, default=None,
                         help="check the partition or train on single:<view>")
    p_train.add_argument("--split", type=_split_value, default="all",
                         help="all, paper, or ratio:<test fraction>")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--classifier", choices=("ls", "svm", "both"), default="both")
    p_train.add_argument("--ridge", type=float, default=1e-6,
                         help="least-squares ridge weight")
    p_train.add_argument("--svm-c", type=float, default=1.0, help="SVM cost parameter")
    p_train.add_argument("--svm-epochs", type=int, default=200, help="SVM training epochs")
    p_train.add_argument("--normalize", choices=("unit", "none"), default="unit",
                         help="normalization recorded for evaluation bookkeeping")
    p_train.add_argument("--sweep-lambda", type=_float_list, default=None,
                         help="comma list of atom penalty weights to try")
    p_train.add_argument("--sweep-gamma", type=_float_list, default=None,
                         help="comma list of code penalty weights to try")
    p_train.add_argument("--sweep-atoms", type=_int_list, default=None,
                         help="comma list of atoms PER CLASS to try (total = value * classes)")
    p_train.add_argument("--output", required=True, help="model archive to write")
    p_train.add_argument("--trace", help="objective trace CSV (default: <output>.trace.csv)")
    p_train.add_argument("--quiet", action="store_true")
    _add_solver_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a model archive on features")
    p_eval.add_argument("--model", required=True, help="model archive")
    p_eval.add_argument("--features", required=True, help="feature container")
    p_eval.add_argument("--manifest", help="manifest CSV supplying labels")
    p_eval.add_argument("--task", choices=("fer", "fr"), default="fer")
    p_eval.add_argument("--labels", help="sample_id,label CSV")
    p_eval.add_argument("--split", choices=("archive", "all"), default="archive",
                        help="evaluate the archive's recorded test part or everything")
    p_eval.add_argument("--format", choices=("text", "csv"), default="text")
    p_eval.add_argument("--output", help="prefix for .txt/.csv/.confusion.txt files")
    p_eval.add_argument("--quiet", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a planted synthetic instance")
    p_synth.add_argument("--views", type=int, default=2)
    p_synth.add_argument("--dims", type=_int_list, default=[20, 20],
                         help="per-view dimensions (single value repeats)")
    p_synth.add_argument("--atoms", type=int, default=16)
    p_synth.add_argument("--samples", type=int, default=64)
    p_synth.add_argument("--sparsity", type=int, default=3)
    p_synth.add_argument("--snr", type=_snr_value, default=None,
                         help="noise level in dB (none for noiseless)")
    p_synth.add_argument("--classes", type=int, default=1)
    p_synth.add_argument("--separation", type=float, default=1.0,
                         help="strength of the per-class code template")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--output-prefix", required=True)
    p_synth.add_argument("--quiet", action="store_true")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args) or 0)
    except (ParameterError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
