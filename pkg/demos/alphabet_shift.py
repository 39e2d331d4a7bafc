"""How a subword vocabulary degrades on text written partly in an unseen alphabet.

    python demos/alphabet_shift.py
"""

from famadapt.subword import diagnostics, train_subword
from famadapt.synthetic import LATIN, make_language


def main():
    home = make_language("home", LATIN, seed=4)
    tok = train_subword(home.lines(3000, 1), 400)
    samples = {
        "home": home.lines(500, 2),
        "half-shifted": make_language("half", "abdefgikl" + "ʒŋšžčđáâõ", seed=5).lines(500, 3),
        "unseen": make_language("far", "абвгдежзиклмнопрстуя", seed=6).lines(500, 3),
    }
    print("sample\tchars/token\tunk%\tmean length")
    for name, lines in samples.items():
        d = diagnostics(tok, lines)
        print(f"{name}\t{d.chars_per_token:.2f}\t{100 * d.unk_unigram_frequency:.1f}"
              f"\t{d.mean_sequence_length:.1f}")


if __name__ == "__main__":
    main()
