from .errors import WordEncodingError


def read_word_list(path: str) -> list[str]:
    """Read one word per line, skipping blanks, keeping first-seen order.

    Words must be lowercase and whitespace-free (anchors key on the exact
    string the training pipeline uses for class labels). Duplicates collapse
    to the first occurrence.
    """
    words: list[str] = []
    seen: set[str] = set()
    bad: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if not word:
                continue
            if word != word.lower() or any(c.isspace() for c in word):
                bad.append(word)
            elif word not in seen:
                seen.add(word)
                words.append(word)
    if bad:
        raise WordEncodingError(
            "words must be lowercase and whitespace-free: " + ", ".join(bad)
        )
    if not words:
        raise WordEncodingError(f"no words found in {path}")
    return words
