#!/usr/bin/env python3
"""Writes the expected prompts of the scripted fixture run.

Slices are picked by hand from the fixture sources; nothing here calls the
Rust code. Run from the repository root: python3 fixtures/golden/generate.py
"""

import hashlib
import json
import pathlib

FIX = pathlib.Path(__file__).resolve().parent.parent
OUT = FIX / "golden"

SECTIONING = "Answer with two sections headed exactly 'ROOT CAUSE:' and 'FIXING STRATEGY:'."
PATCH_FORMAT = (
    "Format each patch as a fenced code block headed 'Patch N:' containing a unified diff "
    "against the shown line numbers."
)


def view(path, lines):
    src = (FIX / path).read_text().splitlines()
    return "\n".join(f"{n}: {src[n - 1].rstrip()}" for n in lines)


def exemplar(slice_, cwe, lines, patch, ei):
    return (
        f"Q: Given the following code slice {slice_}, which has a vulnerability among {cwe} and lines {lines}, "
        f"the patch is {patch}. Starting with the external inputs: {ei}, reason about the vulnerable behavior "
        f"step by step until the vulnerability is determined.\n{SECTIONING}"
    )


def root_cause(slice_, cwe, lines, ei):
    return (
        f"Q: Given the following code slice: {slice_} which has a vulnerability among {cwe} and lines: {lines}. "
        f"Starting with the external inputs: {ei}, reason about the vulnerable behavior step by step until the "
        "vulnerability is determined. If you encounter uncertainty due to a lack of function definitions, please "
        'tell the functions needed with the format {"context_funcs":[func_1,func_2,CALLER_of_func...]} where '
        '"CALLER_of_func" is a placeholder for the caller of the given functions.'
    )


def comparison(a, b):
    return f"Q: Are the following two root causes similar? {a} {b} Please simply answer yes or no."


def question(slice_, cwe, lines):
    return (
        f"Q: Given the following code slice: {slice_} which has a vulnerability among {cwe} and lines: {lines}, "
        "please generate five possible patches for the vulnerability."
    )


def patch_gen(shots, slice_, cwe, lines, rc):
    head = "".join(
        f"{question(s, c, l)} A: Step 1. {r}\nStep 2. {f}\nStep 3. {p} " for (s, c, l, r, f, p) in shots
    )
    return f"{head}{question(slice_, cwe, lines)} A: Step 1. {rc}\n{PATCH_FORMAT}"


def validation(slice_, cwe, lines, patch):
    return (
        f"Q: Given the following code slice: {slice_} which has a vulnerability among {cwe} and lines: {lines}. "
        "Please validate whether the following patch fixes the vulnerability while keeping the functionality: "
        f"{patch}. Please simply answer yes or no."
    )


def split_sections(reply):
    low = reply.lower()
    rc_at = low.index("root cause")
    fs_at = low.index("fixing strategy")

    def body(start, end):
        text = reply[start:end]
        text = text[text.index(":") + 1 :]
        return text.strip().strip("*").strip()

    return body(rc_at, fs_at), body(fs_at, len(reply))


def main():
    train = [json.loads(l) for l in (FIX / "train.jsonl").read_text().splitlines() if l.strip()]
    mine = json.loads((FIX / "scripts/mine.json").read_text())
    patch_script = json.loads((FIX / "scripts/patch.json").read_text())
    sample = json.loads((FIX / "sample_jsi.json").read_text())

    shots = {}
    views = {
        "train-copy-name": ([3, 5, 6, 9, 14, 15], "9: char **argv", "5, 6"),
        "train-read-index": ([3, 5, 6, 8, 11, 16, 17], "11: char **argv", "8"),
        "train-alloc-count": ([3, 8, 9, 10, 13, 18, 19], "13: char **argv", "8"),
    }
    for row, reply in zip(train, mine):
        lines, ei, vlines = views[row["id"]]
        src = row["sources"][0]["path"]
        rc, fs = split_sections(reply)
        cwe = ", ".join(row["vuln"]["cwe_ids"])
        patch = row["ground_truth_patch"].rstrip("\n")
        shots[row["id"]] = (view(src, lines), cwe, vlines, rc, fs, patch, ei)

    s = shots["train-copy-name"]
    prompts = {"exemplar": exemplar(s[0], s[1], s[2], s[5], s[6])}

    cwe = ", ".join(sample["vuln"]["cwe_ids"])
    ei = "8: int argc; 8: char **argv; 24: p = (char *)malloc(len)"
    narrow = view("jsi_like.c", [42, 48])
    wide = view("jsi_like.c", [8, 15, 16, 22, 23, 24, 28, 42, 48])
    prompts["root_cause_round1"] = root_cause(narrow, cwe, "48", ei)
    prompts["root_cause_round2"] = root_cause(wide, cwe, "48", ei)
    final_rc = patch_script[1].strip()
    prompts["comparison"] = comparison(shots["train-copy-name"][3], final_rc)
    chosen = [shots["train-copy-name"][:6], shots["train-alloc-count"][:6]]
    prompts["patch"] = patch_gen(chosen, wide, cwe, "48", final_rc)
    first_patch = (FIX / "pair_correct.diff").read_text().rstrip("\n")
    prompts["validation"] = validation(wide, cwe, "48", first_patch)

    digests = {}
    for name, text in prompts.items():
        (OUT / f"{name}.txt").write_text(text)
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    (OUT / "digests.json").write_text(json.dumps(digests, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
