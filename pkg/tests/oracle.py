"""Brute-force reference grader used to freeze the golden scoring suite.

Deliberately written without regular expressions for number parsing and
with exhaustive permutation search for list matching, so it shares no code
path with ``skillforge.scoring``.

Run ``python tests/oracle.py`` to regenerate ``tests/data/golden_scores.json``.
"""

from __future__ import annotations

import itertools
import json
from fractions import Fraction
from pathlib import Path

DIGITS = "0123456789"
ASCII_ALNUM = DIGITS + "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
UNITS = {"million": 10**6, "billion": 10**9, "trillion": 10**12}
QUOTES = "\"'“”‘’`"
TAUS = ["0.0", "0.01", "0.025", "0.05", "0.10"]


def _take_digits(text, j):
    k = j
    while k < len(text) and text[k] in DIGITS:
        k += 1
    return k


def _unit_after(text, end):
    window = text[end:end + 20].lstrip().lower()
    for word, mult in UNITS.items():
        for form in (word + "s", word):
            if window.startswith(form):
                rest = window[len(form):]
                if not rest or not (rest[0].isalnum() or rest[0] == "_"):
                    return mult
    return 1


def scan_numbers(text):
    """Return (value: Fraction, plain_int: bool) tuples in order of appearance."""
    found = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c not in DIGITS or (i > 0 and text[i - 1] in DIGITS + "."):
            i += 1
            continue
        run_end = _take_digits(text, i)
        end = run_end
        grouped = False
        if run_end - i <= 3:
            j = run_end
            while (j < n and text[j] == "," and j + 4 <= n
                   and all(ch in DIGITS for ch in text[j + 1:j + 4])
                   and (j + 4 == n or text[j + 4] not in DIGITS)):
                j += 4
                grouped = True
            end = j
        decimal = False
        if end < n and text[end] == "." and end + 1 < n and text[end + 1] in DIGITS:
            end = _take_digits(text, end + 1)
            decimal = True
        body = text[i:end]
        negative = False
        signed = False
        if i > 0 and text[i - 1] in "+-":
            before = text[i - 2] if i >= 2 else ""
            if before == "" or (before not in ASCII_ALNUM and before != "."):
                signed = True
                negative = text[i - 1] == "-"
        value = Fraction(body.replace(",", ""))
        mult = _unit_after(text, end)
        value *= mult
        if negative:
            value = -value
        plain = not grouped and not decimal and not signed and mult == 1
        found.append((value, plain))
        i = end
    return found


def _remove_units(text):
    out = text.lower()
    for word in UNITS:
        out = " ".join(
            tok for tok in out.split(" ")
            if tok.strip(".,;:!?") not in (word, word + "s")
        )
    return out


def _strip_parens(text):
    while True:
        start = -1
        for idx, ch in enumerate(text):
            if ch == "(":
                start = idx
            elif ch == ")" and start >= 0:
                text = text[:start] + text[idx + 1:]
                break
        else:
            return text


def significant_text(gt):
    return sum(1 for ch in _remove_units(gt) if ch.isalpha()) >= 3


def is_year_answer(gt):
    nums = scan_numbers(gt)
    return bool(nums) and all(p and 1900 <= v <= 2100 for v, p in nums)


def within(g, p, tau):
    if g == 0:
        return p == 0
    return abs(g - p) <= tau * abs(g)


def all_recovered(gts, preds, tau):
    if len(preds) < len(gts):
        return False
    for perm in itertools.permutations(range(len(preds)), len(gts)):
        if all(within(g, preds[k], tau) for g, k in zip(gts, perm)):
            return True
    return False


def normalize(text):
    text = text.strip()
    text = "".join(ch for ch in text if ch not in QUOTES)
    text = _strip_parens(text)
    return " ".join(text.split()).casefold()


def key_words(gt):
    text = _remove_units(_strip_parens(gt))
    words, cur = [], ""
    for ch in text:
        if ch.isalpha():
            cur += ch
        else:
            if cur:
                words.append(cur)
            cur = ""
    if cur:
        words.append(cur)
    return [w.casefold() for w in words]


def oracle_score(gt, pred, tau):
    tau = Fraction(tau)
    gnums = [v for v, _ in scan_numbers(gt)]
    if not gnums:
        g, p = normalize(gt), normalize(pred)
        return int(g in p) if g else int(p == "")
    sig = significant_text(gt)
    pnums = scan_numbers(pred)
    if not (sig or is_year_answer(gt)):
        pnums = [(v, plain) for v, plain in pnums if not (plain and 1900 <= v <= 2100)]
    ok = all_recovered(gnums, [v for v, _ in pnums], tau)
    if sig:
        low = pred.casefold()
        ok = ok and all(w in low for w in key_words(gt))
    return int(ok)


def oracle_weighted(gt, pred):
    weights = [1 / (1 + 20 * Fraction(t)) for t in TAUS]
    hits = [oracle_score(gt, pred, t) for t in TAUS]
    return sum(w * h for w, h in zip(weights, hits)) / sum(weights)


GOLDEN_PAIRS = [
    # plain numeric
    ("42", "42"),
    ("42", "The answer is 42."),
    ("42", "41"),
    ("100", "104"),
    ("100", "100.5"),
    ("100", "102"),
    ("100", "109.9"),
    ("100", "111"),
    ("-5.5", "-5.5"),
    ("-5.5", "5.5"),
    ("0", "0"),
    ("0", "0.001"),
    ("1,234.5", "1234.5"),
    ("12.5%", "12.5"),
    ("3.14159", "3.14"),
    ("1,000", "1,010"),
    # unit normalisation
    ("3.5 million", "3,500,000"),
    ("3.5 million", "3.5"),
    ("2 billion", "2,000 million"),
    ("1.2 trillion", "1,200 billion"),
    ("$4.1 billion", "about 4.05 billion dollars"),
    ("7 Million", "7000000"),
    ("250 millions", "250,000,000"),
    # year filtering
    ("512", "reported in 2023, total 512"),
    ("512", "reported in 2023"),
    ("1977", "1977"),
    ("1977", "In 1977."),
    ("2000", "It was 1999 or 2000"),
    ("1950", "1951"),
    ("12", "In 2019 the count was 12.4"),
    ("2,050", "2050"),
    # hybrid
    ("March 1977", "It was March 1977"),
    ("March 1977", "It was April 1977"),
    ("March 1977", "march of 1977"),
    ("March 1977", "1977"),
    ("5 percent", "roughly 5 percent"),
    ("5 percent", "5"),
    ("45 (USD) dollars", "45 dollars"),
    ("Q3 2021", "q3 2021"),
    # lists
    ("10, 20, 30", "the values were 10 and 30"),
    ("10, 20, 30", "30, 10 and 20"),
    ("10, 20, 30", "10, 20, 30, 40"),
    ("10; 10", "10"),
    ("10; 10", "10 and 10"),
    ("100; 110", "110 then 100"),
    ("1000; 1105", "1105 and 1000"),
    ("1105; 1000", "1000 and 1105"),
    ("1.5, 2.5", "2.52 and 1.49"),
    # parenthetical / textual
    ("Paris", "The answer is paris."),
    ("Paris (FR)", "Paris"),
    ("\"Paris\"", "paris, France"),
    ("Paris", "London"),
    ("New   York", "new york city"),
    ("Department of the Treasury (DoT)", "the department of the treasury"),
    ("(n/a)", ""),
    ("yes", "Yes."),
    ("", "anything"),
    # prediction-side quirks
    ("2021", "COVID-19 in 2021"),
    ("19", "COVID-19"),
    ("3", "v.3"),
]


def build_golden():
    rows = []
    for gt, pred in GOLDEN_PAIRS:
        rows.append({
            "ground_truth": gt,
            "prediction": pred,
            "binary": {t: oracle_score(gt, pred, t) for t in TAUS + ["0.001"]},
            "weighted": [oracle_weighted(gt, pred).numerator,
                         oracle_weighted(gt, pred).denominator],
        })
    return rows


if __name__ == "__main__":
    out = Path(__file__).parent / "data" / "golden_scores.json"
    out.write_text(json.dumps(build_golden(), indent=1, ensure_ascii=False) + "\n")
    print(f"wrote {out}")
