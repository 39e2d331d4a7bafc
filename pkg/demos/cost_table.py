"""Parameter counts and relative training cost across vocabulary sizes.

    python demos/cost_table.py
"""

from famadapt.analysis.cost import PRESETS, count_parameters, model_flops, relative_cost

VOCABS = (16_384, 32_768, 65_536, 131_072, 250_002)
LENGTHS = (49.9, 44.3, 39.7, 36.1, 48.4)


def main():
    base = PRESETS["xlmr-base"]
    ref = base.with_vocab(32_768)
    print("vocab\tparams(M)\tflops/token(G)\tcost vs 32k")
    for vocab, length in zip(VOCABS, LENGTHS):
        dims = base.with_vocab(vocab)
        cost = relative_cost(dims, ref, length, 44.3)
        print(f"{vocab}\t{count_parameters(dims) / 1e6:.1f}\t{model_flops(dims) / 1e9:.3f}"
              f"\t{cost:.2f}")


if __name__ == "__main__":
    main()
