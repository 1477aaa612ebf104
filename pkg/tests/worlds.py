"""Random (metamodels, transformation, model) worlds for exercising the
M2M engine. Generated transformations always form valid mappings: every
class has a rule (or two with complementary guards), placements copy the
containment structure, and multi-pattern rules nest their own extras."""

import json
import random

from tracelink.model import Element, Model, parse_metamodel


def random_world(seed):
    rng = random.Random(seed)
    depth = rng.randint(2, 4)

    src_classes = []
    for i in range(depth):
        cls = {
            "name": f"C{i}",
            "attributes": [
                {"name": "name", "type": "string"},
                {"name": "kind", "type": "string"},
                {"name": "num", "type": "int"},
            ],
        }
        if i < depth - 1:
            cls["collections"] = [{"class": f"C{i + 1}", "name": "items"}]
        src_classes.append(cls)
    dst_classes = []
    for i in range(depth):
        colls = [{"class": "Extra", "name": "extras"}]
        if i < depth - 1:
            colls.insert(0, {"class": f"D{i + 1}", "name": "items"})
        dst_classes.append({
            "name": f"D{i}",
            "attributes": [
                {"name": "label", "type": "string"},
                {"name": "kind", "type": "string"},
                {"name": "num", "type": "int"},
            ],
            "collections": colls,
        })
    dst_classes.append({"name": "Extra", "attributes": [{"name": "tag", "type": "string"}]})

    metamodels = {
        "SrcMM": parse_metamodel(json.dumps({"name": "SrcMM", "classes": src_classes})),
        "DstMM": parse_metamodel(json.dumps({"name": "DstMM", "classes": dst_classes})),
    }

    rules = []
    for i in range(depth):
        placement = ", items <- s.items" if i < depth - 1 else ""
        style = rng.randint(0, 2)
        if style == 0:
            rules.append(
                f'rule R{i} {{ from s : SrcMM!C{i} to t : DstMM!D{i} '
                f'(label <- concat("x-", s.name), kind <- s.kind, num <- s.num{placement}) }}')
        elif style == 1:
            rules.append(
                f'rule R{i}a {{ from s : SrcMM!C{i} (s.kind = "a") to t : DstMM!D{i} '
                f'(label <- concat("a:", s.name), kind <- s.kind, num <- s.num{placement}) }}')
            rules.append(
                f'rule R{i}b {{ from s : SrcMM!C{i} (s.kind != "a") to t : DstMM!D{i} '
                f'(label <- concat("b:", s.name), kind <- s.kind, num <- s.num{placement}) }}')
        else:
            rules.append(
                f'rule R{i} {{ from s : SrcMM!C{i} to t : DstMM!D{i} '
                f'(label <- s.name, kind <- s.kind, num <- s.num, extras <- u{placement}), '
                f'u : DstMM!Extra (tag <- concat(s.kind, s.name)) }}')
    text = "transformation Gen;\ninput src : SrcMM;\noutput dst : DstMM;\n" + "\n".join(rules) + "\n"

    counter = [0]

    def element(level):
        counter[0] += 1
        e = Element(f"C{level}", {
            "name": f"e{counter[0]}",
            "kind": rng.choice("ab"),
            "num": rng.randint(0, 99),
        })
        if level < depth - 1 and counter[0] < 40:
            kids = [element(level + 1) for _ in range(rng.randint(0, 3))]
            if kids:
                e.collections["items"] = kids
        return e

    model = Model("src.model.json", "SrcMM", element(0))
    return metamodels, text, model
