"""Run every benchmark whose data is present and write one report directory each.

Dataset paths come from the same environment variables as the acceptance
suite (CHAOSML_ABALONE, CHAOSML_HCV, CHAOSML_MNIST_DIR, CHAOSML_MNIST_EMBEDDING).
MNIST falls back to the bundled 5000-digit subset with PCA-7 features.
"""

import argparse
import json
import os
from pathlib import Path

from chaosml.data import DataError
from chaosml.experiments import default_config, emit_split_study, run_circuit, run_optimize, run_pipeline

REPO = Path(__file__).resolve().parents[1]


def configs():
    yield default_config("sinc")
    yield default_config("iris")
    dual = default_config("sinc-dual")
    dual.optimize = {"budget": 40, "strategy": "refine"}
    yield dual
    if os.environ.get("CHAOSML_ABALONE"):
        cfg = default_config("abalone")
        cfg.data.path = os.environ["CHAOSML_ABALONE"]
        yield cfg
    if os.environ.get("CHAOSML_HCV"):
        cfg = default_config("liver")
        cfg.data.path = os.environ["CHAOSML_HCV"]
        yield cfg
    cfg = default_config("mnist")
    d = os.environ.get("CHAOSML_MNIST_DIR")
    if d:
        cfg.data.images = [f"{d}/train-images-idx3-ubyte", f"{d}/t10k-images-idx3-ubyte"]
        cfg.data.labels = [f"{d}/train-labels-idx1-ubyte", f"{d}/t10k-labels-idx1-ubyte"]
        if os.environ.get("CHAOSML_MNIST_EMBEDDING"):
            cfg.data.embedding, cfg.data.reduce_dim = os.environ["CHAOSML_MNIST_EMBEDDING"], None
    else:
        sub = REPO / "data" / "mnist5k"
        cfg.data.images = [str(sub / "images-idx3-ubyte.gz")]
        cfg.data.labels = [str(sub / "labels-idx1-ubyte.gz")]
    yield cfg


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--splits", type=int, default=20, help="repeated splits for classification benchmarks")
    args = ap.parse_args()

    summary = {}
    for cfg in configs():
        try:
            if cfg.optimize:
                rep, res = run_optimize(cfg)
                summary[cfg.name] = {"best_params": res.best_params, "rmse": res.best_objective}
            else:
                rep = run_pipeline(cfg)
                summary[cfg.name] = {"baseline": rep.baseline, "best": rep.best_metric,
                                     "iteration": rep.best_iteration}
            rep.write(args.out / cfg.name)
            if cfg.lda_components or cfg.data.smote:
                study = emit_split_study(cfg, args.splits)
                study.write(args.out / (cfg.name + "-splits"))
                r = study.results[cfg.readout]
                summary[cfg.name]["splits"] = {"mean": r["mean"], "std": r["std"]}
            if cfg.name == "iris":
                summary["iris-circuit"] = {"best": run_circuit(cfg).best_metric}
        except DataError as exc:
            summary[cfg.name] = {"error": str(exc)}
        print(cfg.name, json.dumps(summary[cfg.name], default=float))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1, default=float))


if __name__ == "__main__":
    main()
