"""Regenerate the toy embedding tables and ontologies under data/.

The tables are synthetic: words share a common direction (so unrelated words
still have a small positive cosine, as in real corpora), health words share a
second one and figurative-context words a third.
"""

import pathlib
import re

import numpy as np

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"

FIGURATIVE = """genius luck lol haha omg fml economy fandom fans toxic song club saturday night
referee sport coach backhand tennis bill exam score phone wifi password ending beach holiday
trip corruption city tropical coast great forever shaking place bieber real music sick""".split()

FUNCTION = """a an the and or but of to in on at for with my your his her our their i me we you
he she it they is was are were be been has have had do does did this that these those so
not no very too just all one two last next today yesterday tomorrow again now then""".split()


def words_of(path):
    text = path.read_text(encoding="utf-8").lower()
    return set(re.findall(r"[a-z0-9_']+", text))


def vocabulary():
    health = {w.strip() for w in (DATA / "health_lexicon.txt").read_text().splitlines()
              if w.strip() and not w.startswith("#")}
    health |= {w.strip() for w in (DATA / "keywords.txt").read_text().splitlines()
               if w.strip() and not w.startswith("#")}
    health |= {"diagnosed", "tremor", "paralysed", "pills", "care", "ward", "nurse", "attack",
               "breast", "brain", "screening", "awareness", "research", "trial", "foundation"}
    corpus = set()
    for line in (DATA / "sample.tsv").read_text(encoding="utf-8").splitlines():
        corpus |= set(re.findall(r"[a-z0-9_]+", line.split("\t")[2].lower()))
    words = sorted(health | set(FIGURATIVE) | set(FUNCTION) | corpus)
    return words, health


def table(words, health, dim, seed):
    rng = np.random.default_rng(seed)
    common = np.zeros(dim); common[0] = 1.0
    med = np.zeros(dim); med[1] = 1.0
    fig = np.zeros(dim); fig[2] = 1.0
    rows = {}
    for w in words:
        v = 0.3 * common + 0.25 * rng.standard_normal(dim) / np.sqrt(dim)
        if w in health:
            v += 1.0 * med
        elif w in FIGURATIVE:
            v += 1.0 * fig
        elif w not in FUNCTION:
            v += 0.35 * rng.standard_normal(dim) / np.sqrt(dim)
        rows[w] = v
    return rows


def write(path, rows, header=False, prefix=""):
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(f"{len(rows)} {len(next(iter(rows.values())))}\n")
        for w, v in rows.items():
            f.write(prefix + w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")


def main():
    words, health = vocabulary()
    write(DATA / "similarity.txt", table(words, health, 25, 1))
    write(DATA / "vectors_w2v.txt", table(words, health, 20, 2), header=True)
    write(DATA / "vectors_glove.txt", table(words, health, 20, 3))
    write(DATA / "vectors_numberbatch.txt", table(words, health, 20, 4), prefix="/c/en/")
    (DATA / "ontology_mesh.txt").write_text(
        "heart_attack cardiac heart attack\nstroke brain paralysed\ncancer tumor tumour oncologist chemotherapy\n"
        "depression depressed anxiety therapy\nalzheimers dementia memory forgetful\n"
        "parkinsons parkinson tremor tremors\n")
    (DATA / "ontology_wordnet.txt").write_text(
        "cough coughing wheezing\nfever temperature flu\nsick ill illness\ndoctor physician clinic\n"
        "attack onset\nstroke apoplexy\n")
    (DATA / "ontology_symptom.txt").write_text(
        "pain ache aching sore painful\ncough coughing throat\nfever temperature\n"
        "numbness numb paralysed\nheadache migraine\nfatigue tired\n")


if __name__ == "__main__":
    main()
