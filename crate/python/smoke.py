"""Smoke test for the plkb_py extension.

Build it first:  pip install --no-build-isolation -e crates/python
"""
import plkb_py as p

rows = [("0000", True), ("1111", True), ("1010", True), ("1100", True),
        ("0010", False), ("0100", False), ("1110", False), ("1000", False)]
ds = p.Dataset.from_strings(rows)

tree = p.Model.train(ds, "tree").full_kb()
print(tree)
print(tree.serialize(), end="")

direct = p.Model.train(ds, "direct")
query = "a1=0,a2=1,a3=0,a4=1"
r = direct.classify(query, ds)
print(r)
assert not r.label

e = direct.explain(query, 1, ds)
print(e)
assert e.sub_query == "a1=0"

mp = p.KnowledgeBase("0.6 !alpha | beta\n0.8 alpha\n")
b = p.classify(mp, target="beta")
print("beta in", (b.p_lower, b.p_upper))
assert abs(b.p_lower - 0.4) < 1e-6 and abs(b.p_upper - 0.6) < 1e-6
print("consistency", p.check_consistency(mp))
print("ok")
