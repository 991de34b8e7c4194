"""Writes tests/fixtures/smoke_100.jsonl: 100 synthetic python question quadruplets for the overfit smoke run.

Titles, descriptions and code are assembled from fixed phrase lists with a seeded RNG, so the file is
reproducible. Run from the repository root: python3 tests/oracles/make_smoke_fixture.py
"""

import json
import random

ACTIONS = [
    ("sort", "sorted({x}, key=len)"),
    ("reverse", "{x}[::-1]"),
    ("flatten", "[y for z in {x} for y in z]"),
    ("deduplicate", "list(dict.fromkeys({x}))"),
    ("count items in", "collections.Counter({x})"),
    ("serialize", "json.dumps({x})"),
    ("copy", "copy.deepcopy({x})"),
    ("filter", "[v for v in {x} if v]"),
    ("merge", "{{**{x}, **other}}"),
    ("iterate over", "for item in {x}:\n    print(item)"),
]
OBJECTS = ["a list", "a dictionary", "a nested list", "a tuple", "a set", "a string",
           "a generator", "a dataframe column", "a json object", "a file path list"]
CONTEXTS = ["without a loop", "in place", "in one line", "efficiently", "by key", "recursively",
            "with a lambda", "in python 3", "without numpy", "using itertools"]
PROBLEMS = [
    "I get a TypeError when I try this.",
    "The result is empty and I do not understand why.",
    "My current approach is very slow for large inputs.",
    "It works for small inputs but fails on real data.",
    "The order of the elements changes unexpectedly.",
    "I keep getting an AttributeError about a missing method.",
]
VARS = ["data", "items", "records", "values", "rows", "names", "scores", "users"]


def main():
    rng = random.Random(20240601)
    seen = set()
    rows = []
    while len(rows) < 100:
        verb, snippet = rng.choice(ACTIONS)
        obj = rng.choice(OBJECTS)
        ctx = rng.choice(CONTEXTS)
        title = f"How to {verb} {obj} {ctx}?"
        if title in seen:
            continue
        seen.add(title)
        var = rng.choice(VARS)
        description = (f"I have {obj} called {var} and I need to {verb} it {ctx}. "
                       f"{rng.choice(PROBLEMS)} What is the idiomatic way to do this?")
        code = f"{var} = load_{var}()\nresult = " + snippet.format(x=var) + "\nprint(result)"
        i = len(rows)
        rows.append({
            "lang": "python",
            "title": title,
            "description": description,
            "code": code,
            "creation_date": f"2021-01-{1 + i // 10:02d}T{i % 10:02d}:00:00.000",
            "source_post_id": 1000 + i,
        })
    with open("tests/fixtures/smoke_100.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
