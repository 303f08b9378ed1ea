#!/usr/bin/env python3
"""Writes data/imagenet_hierarchy.json, a strict-tree reduction of the ImageNet
collection hierarchy.

WordNet is a DAG, so a few collections overlap (Domesticated animal with
Vertebrate, Covering and Transport with their siblings). A tree needs each
class in exactly one deepest collection: Domesticated animal is dropped, and
Covering, Transport and Vehicle keep fewer classes than the full DAG gives
them. Every other collection keeps its class count.

Class indices are placeholders (no synset ids): they are handed out in
depth-first order, own classes before children.
"""
import json
import pathlib
import sys

# (label, name, total classes, children); own classes = total - sum(children)
TREE = ("", "All", 1000, [
    ("1", "Organism", 410, [
        ("1.1", "Creature", 398, [
            ("1.1.2", "Vertebrate", 337, [
                ("1.1.2.1", "Mammalian", 218, [
                    ("1.1.2.1.1", "Primate", 20, []),
                    ("1.1.2.1.2", "Hoofed mammal", 17, []),
                    ("1.1.2.1.3", "Feline", 13, []),
                    ("1.1.2.1.4", "Canine", 130, []),
                ]),
                ("1.1.2.2", "Aquatic vertebrate", 16, []),
                ("1.1.2.3", "Bird", 59, []),
                ("1.1.2.4", "Reptilian", 36, [
                    ("1.1.2.4.1", "Saurian", 11, []),
                    ("1.1.2.4.2", "Serpent", 17, []),
                ]),
            ]),
            ("1.1.3", "Invertebrate", 61, [
                ("1.1.3.1", "Arthropod", 47, [
                    ("1.1.3.1.1", "Insect", 27, []),
                    ("1.1.3.1.2", "Arachnoid", 9, []),
                    ("1.1.3.1.3", "Crustacean", 9, []),
                ]),
            ]),
        ]),
    ]),
    ("2", "Artifact", 522, [
        ("2.1", "Commodity", 63, [
            ("2.1.1", "Consumer Good", 62, [
                ("2.1.1.1", "Clothing", 49, [
                    ("2.1.1.1.1", "Garment", 24, []),
                ]),
                ("2.1.1.2", "Durable", 13, []),
            ]),
        ]),
        ("2.2", "Covering", 49, [
            ("2.2.1", "Protective covering", 27, []),
        ]),
        ("2.3", "Instrumentation", 353, [
            ("2.3.1", "Container", 99, [
                ("2.3.1.1", "Vessel", 23, []),
                ("2.3.1.2", "Wheeled vehicle", 43, [
                    ("2.3.1.2.1", "Self-propelled vehicle", 31, [
                        ("2.3.1.2.1.1", "Motor vehicle", 22, []),
                    ]),
                ]),
            ]),
            ("2.3.2", "Transport", 28, [
                ("2.3.2.1", "Vehicle", 23, [
                    ("2.3.2.1.1", "Air craft", 4, []),
                    ("2.3.2.1.2", "Water craft", 15, []),
                ]),
            ]),
            ("2.3.3", "Device", 125, [
                ("2.3.3.1", "Instrument", 28, [
                    ("2.3.3.1.1", "Measuring instrument", 12, []),
                    ("2.3.3.1.2", "Weapon", 7, []),
                ]),
                ("2.3.3.2", "Machine", 14, []),
                ("2.3.3.3", "Mechanism", 12, []),
                ("2.3.3.4", "Musical instrument", 26, [
                    ("2.3.3.4.1", "Stringed instrument", 8, []),
                    ("2.3.3.4.2", "Wind instrument", 12, []),
                ]),
            ]),
            ("2.3.4", "Equipment", 37, [
                ("2.3.4.1", "Electronic equipment", 13, []),
                ("2.3.4.2", "Game equipment", 13, []),
            ]),
            ("2.3.5", "Furnishing", 25, []),
            ("2.3.6", "Implement", 38, []),
        ]),
        ("2.4", "Structure", 57, [
            ("2.4.1", "Building", 14, []),
        ]),
    ]),
    ("3", "Geological formation", 10, [
        ("3.1", "Natural elevation", 5, []),
    ]),
    ("4", "Natural object", 17, [
        ("4.1", "Plant", 16, [
            ("4.1.1", "Fruit", 16, [
                ("4.1.1.1", "Edible fruit", 10, []),
            ]),
        ]),
    ]),
    ("5", "Fungus", 7, []),
    ("6", "Nutrition", 10, []),
    ("7", "Vegetable", 13, []),
    ("8", "Beverage", 4, []),
])


def build(node, counter, is_root=False):
    path, name, total, children = node
    own = total - sum(c[2] for c in children)
    if own < 0:
        sys.exit(f"{name}: children hold more classes than {total}")
    out = {"name": name, "path": path}
    if is_root:
        out["num_classes"] = total
        # Root-only classes stay unlisted.
        own_classes = []
        reserved = own
    else:
        own_classes = list(range(counter[0], counter[0] + own))
        counter[0] += own
        reserved = 0
    out["class_count"] = total
    out["classes"] = own_classes
    out["children"] = [build(c, counter) for c in children]
    if is_root and counter[0] + reserved != total:
        sys.exit("class indices do not add up")
    return out


def main():
    dest = pathlib.Path(__file__).resolve().parent.parent / "data" / "imagenet_hierarchy.json"
    tree = build(TREE, [0], is_root=True)
    dest.write_text(json.dumps(tree, indent=2) + "\n")
    print(f"wrote {dest}")


if __name__ == "__main__":
    main()
