"""Command-line entry point: gen | annotate | train | infer | eval | pipeline.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import annotate, evaluation, kb as kbmod, pipeline, relpredict, scene, synthgen


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; usage errors are validation errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt():
    return argparse.ArgumentDefaultsHelpFormatter


def _add_tau(p):
    p.add_argument("--tau-frac", type=float, default=annotate.DEFAULT_TAU_FRAC,
                   help="neighborhood radius as a fraction of the image diagonal")


def _add_train(p):
    p.add_argument("--iters", type=int, default=500, help="gradient descent iterations")
    p.add_argument("--learning-rate", "--lr", type=float, default=0.5, help="step size")
    p.add_argument("--l2", type=float, default=1e-4, help="weight decay coefficient")


def _add_infer(p):
    p.add_argument("--nms-iou", type=float, default=0.5, help="NMS IoU threshold")
    p.add_argument("--rel-threshold", type=float, default=0.5,
                   help="minimum relation probability for exported graph arrows")
    p.add_argument("--score-mode", choices=pipeline.SCORE_MODES, default="composed",
                   help="fine detection score: detection score times support, or raw")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="finegrain", description=__doc__, formatter_class=_fmt())
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic dataset", formatter_class=_fmt())
    p.add_argument("--scenes", type=int, default=None, help="number of scenes (default 200)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--config", type=Path, help="GenConfig JSON; flags override its fields")
    p.add_argument("--out", type=Path, required=True, help="output dataset JSONL")
    p.add_argument("--kb-out", type=Path, help="also write the matching knowledge base here")

    p = sub.add_parser("annotate", help="AUTO relationship annotation", formatter_class=_fmt())
    p.add_argument("--data", type=Path, required=True, help="dataset with fine labels")
    p.add_argument("--kb", type=Path, required=True, help="knowledge base text file")
    p.add_argument("--fraction", type=float, default=1.0,
                   help="fraction of scenes whose fine labels may be used")
    _add_tau(p)
    p.add_argument("--seed", type=int, default=0, help="seed of the scene selection")
    p.add_argument("--out", type=Path, required=True, help="annotated dataset JSONL")
    p.add_argument("--sidecar", type=Path, help="selection record JSON (default <out>.selection.json)")

    p = sub.add_parser("train", help="train the relationship classifier", formatter_class=_fmt())
    p.add_argument("--data", type=Path, required=True, help="annotated dataset JSONL")
    _add_tau(p)
    _add_train(p)
    p.add_argument("--seed", type=int, default=0, help="recorded; training is deterministic")
    p.add_argument("--out", type=Path, required=True, help="model JSON")

    p = sub.add_parser("infer", help="fine-grained inference", formatter_class=_fmt())
    p.add_argument("--data", type=Path, required=True, help="detections JSONL")
    p.add_argument("--model", type=Path, required=True, help="model JSON")
    p.add_argument("--kb", type=Path, required=True, help="knowledge base text file")
    _add_tau(p)
    _add_infer(p)
    p.add_argument("--out", type=Path, required=True, help="prediction JSONL")
    p.add_argument("--emit-graph", type=Path, help="write relation arrows JSON here")

    p = sub.add_parser("eval", help="mAP@50 of predictions", formatter_class=_fmt())
    p.add_argument("--pred", type=Path, required=True, help="prediction JSONL")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth JSONL")
    p.add_argument("--space", choices=("fine", "coarse"), default="fine", help="label space")
    p.add_argument("--points", type=int, choices=(101, 11), default=101,
                   help="recall points of the interpolated AP")
    p.add_argument("--out", type=Path, help="write report JSON here")

    p = sub.add_parser("pipeline", help="annotate, train, infer and evaluate",
                       formatter_class=_fmt())
    p.add_argument("--data", type=Path, required=True, help="dataset with fine labels")
    p.add_argument("--kb", type=Path, required=True, help="knowledge base text file")
    p.add_argument("--test", type=Path,
                   help="held-out dataset; if omitted, --data is split by --train-split")
    p.add_argument("--train-split", type=float, default=0.5,
                   help="leading fraction of --data scenes used for training")
    p.add_argument("--fraction", type=float, default=1.0,
                   help="fraction of training scenes whose fine labels may be used")
    p.add_argument("--seed", type=int, default=0, help="seed of every random choice")
    _add_tau(p)
    _add_train(p)
    _add_infer(p)
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for all outputs")
    return ap


def _cmd_gen(args):
    text = args.config.read_text(encoding="utf-8") if args.config else ""
    cfg = synthgen.GenConfig.from_json(text, num_scenes=args.scenes, seed=args.seed)
    d = synthgen.gen_dataset(cfg)
    scene.save_dataset(d, args.out)
    if args.kb_out:
        synthgen.write_default_kb(args.kb_out)
    print(f"wrote {len(d.scenes)} scenes to {args.out}", file=sys.stderr)


def _annotate(d, kb, fraction, tau_frac, seed):
    return annotate.auto_annotate_dataset(d, kb, annotate.AutoConfig(tau_frac, fraction), seed)


def _cmd_annotate(args):
    d = scene.load_dataset(args.data)
    kb = kbmod.load_kb(args.kb, d)
    ann, record = _annotate(d, kb, args.fraction, args.tau_frac, args.seed)
    scene.save_dataset(ann, args.out)
    sidecar = args.sidecar or args.out.with_name(args.out.name + ".selection.json")
    annotate.save_selection(record, sidecar)
    print(f"annotated {len(record['selected'])} of {len(d.scenes)} scenes", file=sys.stderr)


def _train(d, args):
    examples = annotate.training_examples(d, args.tau_frac)
    if not examples:
        raise ValueError("no annotated training pairs (is the dataset annotated?)")
    cfg = relpredict.TrainConfig(args.iters, args.learning_rate, args.l2, args.seed)
    model = relpredict.train(examples, d.relations, len(d.coarse_classes), cfg)
    print(f"trained on {len(examples)} pairs, final loss "
          f"{model.history[-1] if model.history else float('nan'):.6f}", file=sys.stderr)
    return model


def _cmd_train(args):
    d = scene.load_dataset(args.data)
    _train(d, args).save(args.out)


def _infer_cfg(args):
    return pipeline.InferConfig(args.tau_frac, args.nms_iou, args.rel_threshold, args.score_mode)


def _cmd_infer(args):
    d = scene.load_dataset(args.data)
    model = relpredict.RelModel.load(args.model)
    kb = kbmod.load_kb(args.kb, d)
    pred, graph = pipeline.infer_dataset(d, model, kb, _infer_cfg(args))
    scene.save_dataset(pred, args.out)
    if args.emit_graph:
        pipeline.save_graph(graph, args.emit_graph)


def _cmd_eval(args):
    pred = scene.load_dataset(args.pred)
    gt = scene.load_dataset(args.gt)
    report = evaluation.evaluate_map(pred, gt, args.space, args.points)
    sys.stdout.write(evaluation.render_report(report))
    if args.out:
        args.out.write_text(report.to_json() + "\n", encoding="utf-8")


def _cmd_pipeline(args):
    d = scene.load_dataset(args.data)
    kb = kbmod.load_kb(args.kb, d)
    if args.test:
        train_d, test_d = d, scene.load_dataset(args.test)
        if not test_d.same_header(d):
            raise ValueError("test dataset header differs from training dataset")
    else:
        if not 0 < args.train_split < 1:
            raise ValueError("--train-split must lie in (0, 1)")
        n = round(args.train_split * len(d.scenes))
        train_d, test_d = d.with_scenes(d.scenes[:n]), d.with_scenes(d.scenes[n:])
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    ann, record = _annotate(train_d, kb, args.fraction, args.tau_frac, args.seed)
    scene.save_dataset(ann, out / "annotated.jsonl")
    annotate.save_selection(record, out / "selection.json")
    model = _train(ann, args)
    model.save(out / "model.json")
    pred, graph = pipeline.infer_dataset(test_d, model, kb, _infer_cfg(args))
    scene.save_dataset(pred, out / "pred.jsonl")
    pipeline.save_graph(graph, out / "graph.json")
    reports = {space: evaluation.evaluate_map(pred, test_d, space)
               for space in ("fine", "coarse")}
    (out / "report.json").write_text(
        json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2) + "\n",
        encoding="utf-8")
    for space, r in reports.items():
        sys.stdout.write(f"[{space}]\n" + evaluation.render_report(r))


_COMMANDS = {"gen": _cmd_gen, "annotate": _cmd_annotate, "train": _cmd_train,
             "infer": _cmd_infer, "eval": _cmd_eval, "pipeline": _cmd_pipeline}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except OSError as exc:
        print(f"finegrain {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"finegrain {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
