#!/usr/bin/env python3
"""Independent selection-rule oracle for tests/fixtures/posts_50.xml.

Re-implements the three rules with the Python standard library only (ElementTree
for the dump, html.parser for bodies) and writes the expected outcome to
tests/fixtures/posts_50.expected.json. The C++ tests compare against that file.
"""
import json
import os
import re
import sys
import xml.etree.ElementTree as ET
from html.parser import HTMLParser

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "..", "fixtures")
LANGS = ["python", "java", "javascript", "c#", "php", "html"]


class CodeText(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.depth = 0
        self.blocks = []

    def handle_starttag(self, tag, attrs):
        if tag == "code":
            if self.depth == 0:
                self.blocks.append("")
            self.depth += 1

    def handle_endtag(self, tag):
        if tag == "code" and self.depth > 0:
            self.depth -= 1

    def handle_data(self, data):
        if self.depth > 0:
            self.blocks[-1] += data


def tags_of(field):
    return [t.lower() for t in re.split(r"[<>| ]+", field or "") if t]


def main():
    root = ET.parse(os.path.join(FIXTURES, "posts_50.xml")).getroot()
    rows = root.findall("row")
    questions = {lang: [] for lang in LANGS}
    passing = {lang: [] for lang in LANGS}
    extracted = {lang: [] for lang in LANGS}
    rejected_rows = 0
    for row in rows:
        a = row.attrib
        if "Id" not in a or "CreationDate" not in a or "Body" not in a:
            rejected_rows += 1
            continue
        if a.get("PostTypeId") != "1":
            continue
        tags = tags_of(a.get("Tags"))
        parser = CodeText()
        parser.feed(a["Body"])
        has_code = any(block.strip() for block in parser.blocks)
        ok = int(a.get("Score", "0")) >= 10 and has_code and "AcceptedAnswerId" in a
        words = re.findall(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]", a.get("Title", ""))
        for lang in LANGS:
            if lang not in tags:
                continue
            questions[lang].append(int(a["Id"]))
            if ok:
                passing[lang].append(int(a["Id"]))
                if len(words) >= 2:
                    extracted[lang].append(int(a["Id"]))
    out = {
        "rows": len(rows),
        "rejected_rows": rejected_rows,
        "questions": questions,
        "passing": passing,
        "extracted": extracted,
    }
    path = os.path.join(FIXTURES, "posts_50.expected.json")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    json.dump({k: (len(v) if isinstance(v, list) else v) for k, v in out["questions"].items()}, sys.stdout)
    print()


if __name__ == "__main__":
    main()
