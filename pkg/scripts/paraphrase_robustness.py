"""Answer flips under synonym paraphrase: pipeline versus the max-confidence baseline.

    python3 scripts/paraphrase_robustness.py --n 50 --rates 0.1 0.3 0.5
"""
import argparse

from hypotopo.config import RunConfig
from hypotopo.pipeline import run_instance
from hypotopo.providers import HashEmbedder
from hypotopo.synth import SynthConfig, generate, max_confidence_answer, perturb_paraphrase


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.1, 0.3, 0.5])
    ap.add_argument("--distractor-confidence", type=float, default=0.9)
    ap.add_argument("--jitter", type=float, default=0.05, help="confidence jitter applied with the paraphrase")
    args = ap.parse_args()

    cfg, emb = RunConfig(), HashEmbedder(64)
    insts = generate(SynthConfig(seed=args.seed, n_instances=args.n, distractor_confidence=args.distractor_confidence))
    clean = [run_instance(i, cfg, emb).winner for i in insts]
    print("rate,pipeline_flips,baseline_flips,n")
    for rate in args.rates:
        pipe = base = 0
        for k, inst in enumerate(insts):
            para = perturb_paraphrase(inst, rate, seed=1000 + k, confidence_jitter=args.jitter)
            pipe += clean[k] != run_instance(para, cfg, emb).winner
            base += max_confidence_answer(inst) != max_confidence_answer(para)
        print(f"{rate},{pipe},{base},{len(insts)}")


if __name__ == "__main__":
    main()
