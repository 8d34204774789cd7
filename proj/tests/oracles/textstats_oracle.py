"""Independent regex-based recount of the text statistics for the fixture
corpus. Run once to (re)generate tests/fixtures/textproc/corpus_golden.json;
the C++ tests only read the frozen output."""
import json
import re
import sys
import unicodedata

VOWELS = set("aeiouyéèêëàâîïôûùüœ")
LETTER = r"[A-Za-zÀ-ÖØ-öø-ɏ]"
WORD = re.compile(rf"{LETTER}+(?:-{LETTER}+)*'?")


def words(text):
    out = []
    for m in WORD.finditer(text):
        w = m.group(0)
        # an apostrophe only belongs to the word when a letter follows it
        if w.endswith("'") and not re.match(LETTER, text[m.end():m.end() + 1] or " "):
            w = w[:-1]
        out.append(w)
    return out


def syllables(word):
    groups = re.findall(r"[aeiouyéèêëàâîïôûùüœ]+", word.lower())
    return max(1, len(groups))


def main(path):
    lines = [l for l in open(path, encoding="utf-8").read().splitlines() if l.strip()]
    text = "\n".join(lines) + "\n"
    ws = words(text)
    syl = [syllables(w) for w in ws]
    golden = {
        "n_sentences": len(lines),
        "n_words": len(ws),
        "n_chars": sum(sum(1 for c in w if c.isalpha()) for w in ws),
        "n_syllables": sum(syl),
        "n_complex_words": sum(1 for s in syl if s >= 3),
        "per_sentence": [
            {"words": len(words(l)), "syllables": sum(syllables(w) for w in words(l))}
            for l in lines
        ],
    }
    json.dump(golden, sys.stdout, indent=1, ensure_ascii=False)
    print()


if __name__ == "__main__":
    main(sys.argv[1])
