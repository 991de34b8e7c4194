#!/usr/bin/env python3
"""Writes tests/fixtures/posts_50.xml, a 50-row Posts.xml in the Stack Exchange dump format.

Each row is spelled out below so the expected counts can be checked by eye:
18 python questions, of which the ones marked PASS satisfy all three rules.
"""
import os
from xml.sax.saxutils import quoteattr

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "fixtures", "posts_50.xml")

CODE = "<pre><code>{}\n</code></pre>"


def q(id_, score, title, body, tags, date, accepted=None, note=""):
    return dict(Id=id_, PostTypeId=1, Score=score, Title=title, Body=body, Tags=tags,
                CreationDate=date, AcceptedAnswerId=accepted, note=note)


def a(id_, parent, body, date):
    return dict(Id=id_, PostTypeId=2, ParentId=parent, Score=3, Body=body, CreationDate=date)


ROWS = [
    # --- python questions (18) ---
    q(1, 10, "How to reverse a list in python", "<p>I want to reverse my list.</p>" + CODE.format("xs = [1, 2, 3]"),
      "<python><list>", "2010-01-01T10:00:00.000", 101, "PASS score at threshold"),
    q(2, 9, "Why is my loop slow", "<p>Loop is slow.</p>" + CODE.format("for i in range(10): pass"),
      "<python>", "2010-01-02T10:00:00.000", 102, "score 9"),
    q(3, 50, "What is a decorator", "<p>No code here, just a question.</p>",
      "<python><decorators>", "2010-01-03T10:00:00.000", 103, "no code"),
    q(4, 50, "Read a file line by line", "<p>Reading files.</p>" + CODE.format("open('f').readlines()"),
      "<python><file>", "2010-01-04T10:00:00.000", None, "no accepted answer"),
    q(5, 120, "Sort a dict by value", "<p>I have a dict &amp; want it sorted.</p>" + CODE.format("d = {'a': 2}"),
      "<python><sorting><dictionary>", "2010-01-05T10:00:00.000", 105, "PASS"),
    q(6, 33, "Convert string to datetime",
      "<p>Use <code>strptime</code> maybe?</p>" + CODE.format("datetime.strptime(s, fmt)"),
      "<python><datetime>", "2010-01-06T10:00:00.000", 106, "PASS inline + block code"),
    q(7, 15, "Check if a key exists", "<p>Empty code element follows.</p><pre><code>   </code></pre>",
      "<python>", "2010-01-07T10:00:00.000", 107, "blank code only"),
    q(8, 11, "List comprehension with if else", CODE.format("[x if x else 0 for x in xs]"),
      "<python><list-comprehension>", "2010-01-08T10:00:00.000", 108, "PASS code only, empty description"),
    q(9, 10, "Call a javascript function from python",
      "<p>Bridge question.</p>" + CODE.format("js.call('f')"),
      "<python><javascript>", "2010-01-09T10:00:00.000", 109, "PASS (also javascript)"),
    q(10, 0, "Simple question", "<p>Low score.</p>" + CODE.format("x = 1"),
      "<python>", "2010-01-10T10:00:00.000", 110, "score 0"),
    q(11, -3, "Negative question", "<p>Downvoted.</p>" + CODE.format("x = -1"),
      "<python>", "2010-01-11T10:00:00.000", 111, "negative score"),
    q(12, 999, "Merge two dictionaries in a single expression",
      "<p>How do I merge <b>two</b> dicts?</p>" + CODE.format("x = {'a': 1}") + CODE.format("y = {'b': 2}"),
      "|python|dictionary|merge|", "2010-01-12T10:00:00.000", 112, "PASS pipe tag format, two blocks"),
    q(13, 25, "Escape html entities in output", "<p>Compare &lt;b&gt; with 5 &gt; 3.</p>" + CODE.format("a &lt; b &amp;&amp; c"),
      "<python><html-escape-characters>", "2010-01-13T10:00:00.000", 113, "PASS entities"),
    q(14, 12, "Lambda", "<p>One word title.</p>" + CODE.format("f = lambda: 0"),
      "<python>", "2010-01-14T10:00:00.000", 114, "passes rules; title too short to extract"),
    q(15, 14, "Numpy array shape mismatch", "<p>Shapes differ.</p>" + CODE.format("np.zeros((2, 3))"),
      "<python><numpy>", "2010-01-15T10:00:00.000", 115, "PASS"),
    q(16, 9, "Pandas groupby sum", CODE.format("df.groupby('a').sum()"),
      "<python><pandas>", "2010-01-16T10:00:00.000", None, "score 9, no accepted"),
    q(17, 77, "Virtualenv on windows", "<p>Setup fails on <i>windows</i>.</p>" + CODE.format("virtualenv env"),
      "<python><windows><virtualenv>", "2010-01-17T10:00:00.000", 117, "PASS"),
    q(18, 10, "Flask route returns 404", "<p>My route is not found.</p>" + CODE.format("@app.route('/x')"),
      "<python-3.x><python><flask>", "2010-01-18T10:00:00.000", 118, "PASS"),
    # --- tags that only look like python ---
    q(19, 40, "Python 3 only tag", "<p>Tag variant.</p>" + CODE.format("print(1)"),
      "<python-3.x>", "2010-01-19T10:00:00.000", 119, "python-3.x is not python"),
    q(20, 40, "Jython interop question", "<p>Jython.</p>" + CODE.format("import java"),
      "<jython><java>", "2010-01-20T10:00:00.000", 120, "java PASS"),
    # --- java questions ---
    q(21, 10, "NullPointerException in constructor", "<p>NPE.</p>" + CODE.format("new Foo(null);"),
      "<java>", "2011-02-01T10:00:00.000", 121, "java PASS"),
    q(22, 5, "Java generics wildcard", "<p>Wildcards.</p>" + CODE.format("List<? extends T>"),
      "<java><generics>", "2011-02-02T10:00:00.000", 122, "score 5"),
    q(23, 60, "Spring bean not found", "<p>Bean missing.</p>" + CODE.format("@Autowired Foo foo;"),
      "<java><spring>", "2011-02-03T10:00:00.000", None, "no accepted"),
    q(24, 18, "Convert int to String", "<p>Conversion.</p>" + CODE.format("String.valueOf(i)"),
      "<java><string>", "2011-02-04T10:00:00.000", 124, "java PASS"),
    # --- javascript / c# / php / html ---
    q(25, 300, "Closures inside loops", "<p>Classic.</p>" + CODE.format("for (var i=0;i<3;i++)"),
      "<javascript><closures>", "2012-03-01T10:00:00.000", 125, "js PASS"),
    q(26, 10, "Deep clone an object", "<p>Cloning.</p>" + CODE.format("JSON.parse(JSON.stringify(o))"),
      "<javascript><object>", "2012-03-02T10:00:00.000", 126, "js PASS"),
    q(27, 45, "LINQ group by multiple columns", "<p>Grouping.</p>" + CODE.format("from x in xs group x by new { x.A }"),
      "<c#><linq>", "2012-03-03T10:00:00.000", 127, "c# PASS"),
    q(28, 8, "Async void event handler", "<p>Async.</p>" + CODE.format("async void OnClick()"),
      "<c#><async-await>", "2012-03-04T10:00:00.000", 128, "score 8"),
    q(29, 22, "Undefined index notice", "<p>Notice.</p>" + CODE.format("$_POST['x']"),
      "<php>", "2012-03-05T10:00:00.000", 129, "php PASS"),
    q(30, 13, "Center a div horizontally", "<p>Centering.</p>" + CODE.format("&lt;div class=\"c\"&gt;"),
      "<html><css>", "2012-03-06T10:00:00.000", 130, "html PASS"),
    # --- answers to python questions (must be skipped) ---
    a(101, 1, "<p>Use slicing.</p>" + CODE.format("xs[::-1]"), "2010-01-01T11:00:00.000"),
    a(102, 2, "<p>Use numpy.</p>" + CODE.format("np.arange(10)"), "2010-01-02T11:00:00.000"),
    a(105, 5, "<p>Use sorted.</p>" + CODE.format("sorted(d.items())"), "2010-01-05T11:00:00.000"),
    a(106, 6, "<p>strptime.</p>" + CODE.format("strptime"), "2010-01-06T11:00:00.000"),
    a(108, 8, "<p>ternary.</p>" + CODE.format("a if b else c"), "2010-01-08T11:00:00.000"),
    a(109, 9, "<p>bridge.</p>", "2010-01-09T11:00:00.000"),
    a(112, 12, "<p>Use the ** operator.</p>" + CODE.format("{**x, **y}"), "2010-01-12T11:00:00.000"),
    a(113, 13, "<p>html.escape.</p>", "2010-01-13T11:00:00.000"),
    a(115, 15, "<p>reshape.</p>", "2010-01-15T11:00:00.000"),
    a(117, 17, "<p>Use venv.</p>", "2010-01-17T11:00:00.000"),
    a(118, 18, "<p>Trailing slash.</p>", "2010-01-18T11:00:00.000"),
    a(121, 21, "<p>Check null.</p>", "2011-02-01T11:00:00.000"),
    a(125, 25, "<p>Use let.</p>", "2012-03-01T11:00:00.000"),
    a(127, 27, "<p>Anonymous type.</p>", "2012-03-03T11:00:00.000"),
    # --- other post types (tag wiki excerpts, wikis) ---
    dict(Id=201, PostTypeId=4, Score=0, Body="<p>Python is a language.</p>", CreationDate="2009-01-01T00:00:00.000"),
    dict(Id=202, PostTypeId=5, Score=0, Body="<p>Python wiki body.</p>" + CODE.format("pass"),
         CreationDate="2009-01-01T00:00:00.000"),
    dict(Id=203, PostTypeId=6, Score=0, Body="<p>Moderator nomination.</p>", CreationDate="2009-01-01T00:00:00.000"),
    # --- malformed rows: missing required attributes (rejected with a warning) ---
    dict(Id=301, PostTypeId=1, Score=80, Title="Missing creation date here", Body="<p>x</p>" + CODE.format("x"),
         Tags="<python>", AcceptedAnswerId=999),
    dict(Id=302, PostTypeId=1, Score=80, Title="Missing body attribute here", Tags="<python>",
         CreationDate="2010-02-01T00:00:00.000", AcceptedAnswerId=998),
    dict(PostTypeId=1, Score=80, Title="Missing id attribute here", Body="<p>x</p>" + CODE.format("x"),
         Tags="<python>", CreationDate="2010-02-02T00:00:00.000", AcceptedAnswerId=997),
]

ATTR_ORDER = ["Id", "PostTypeId", "ParentId", "AcceptedAnswerId", "CreationDate", "Score", "Body", "Title", "Tags"]


def main():
    assert len(ROWS) == 50, len(ROWS)
    lines = ['<?xml version="1.0" encoding="utf-8"?>', "<posts>"]
    for row in ROWS:
        attrs = []
        for key in ATTR_ORDER:
            value = row.get(key)
            if value is None:
                continue
            attrs.append(f"{key}={quoteattr(str(value), {chr(10): '&#xA;'})}")
        lines.append("  <row " + " ".join(attrs) + " />")
    lines.append("</posts>")
    with open(OUT, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
