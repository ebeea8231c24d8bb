"""Writes the synthetic fixture corpora: a 40-essay ASAP-style TSV (four sets
of ten) and a 12-essay ELLIPSE-style CSV. Text is generated from a seeded
word bank; longer, more varied essays get higher gold scores."""
import csv, os, random

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..")
rng = random.Random(20241015)

OPENERS = ["I believe", "In my opinion", "Many people think", "It is clear that", "Some students argue",
           "My teacher once said", "Everyone knows", "Research suggests", "I strongly feel", "Most families agree"]
SUBJECTS = ["computers", "libraries", "summer jobs", "school uniforms", "public parks", "video games",
            "community service", "online classes", "team sports", "music lessons", "science fairs", "field trips"]
VERBS = ["help", "change", "improve", "challenge", "support", "shape", "influence", "connect", "encourage", "distract"]
OBJECTS = ["young people", "our town", "the whole community", "students and teachers", "busy parents",
           "older neighbors", "my friends", "local businesses", "the environment", "future leaders"]
DETAILS = ["because they open new opportunities", "since everyone learns in a different way",
           "although some people disagree", "when they are used responsibly", "which makes daily life easier",
           "even if the cost seems high at first", "so that nobody is left behind", "as long as adults stay involved",
           "despite several obvious drawbacks", "while building patience and discipline"]
ADVANCED = ["Consequently,", "Furthermore,", "Nevertheless,", "In particular,", "Admittedly,", "Ultimately,"]

def sentence(level):
    s = f"{rng.choice(OPENERS)} that {rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)}"
    if level >= 2:
        s += " " + rng.choice(DETAILS)
    if level >= 3 and rng.random() < 0.5:
        s = rng.choice(ADVANCED) + " " + s[0].lower() + s[1:]
    return s + "."

def essay(level, sentences):
    return " ".join(sentence(level) for _ in range(sentences))

# (set id, score range, essays as (score, level, sentence count))
def scores(lo, hi, n):
    span = list(range(lo, hi + 1))
    return [span[i * len(span) // n] for i in range(n)]

SETS = [("1", 2, 12), ("2", 1, 6), ("3", 0, 3), ("4", 0, 3)]
sample = open(os.path.join(OUT, "sample_essay.txt")).read().strip()

rows = []
next_id = 1
for set_id, lo, hi in SETS:
    golds = scores(lo, hi, 10)
    rng.shuffle(golds)
    for i, gold in enumerate(golds):
        frac = (gold - lo) / (hi - lo)
        level = 1 + round(frac * 2)
        count = 3 + round(frac * 9) + rng.randint(0, 1)
        text = essay(level, count)
        if set_id == "1" and i == 0:
            text, gold = sample, 8
        rows.append((str(next_id), set_id, text, str(gold)))
        next_id += 1

with open(os.path.join(OUT, "asap_fixture.tsv"), "w", newline="") as f:
    f.write("essay_id\tessay_set\tessay\tdomain1_score\n")
    for r in rows:
        assert "\t" not in r[2] and "\n" not in r[2]
        f.write("\t".join(r) + "\n")

grades = ["8", "9", "10", "11", "12"]
with open(os.path.join(OUT, "ellipse_fixture.csv"), "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["text_id", "full_text", "Overall", "grade", "Cohesion", "Syntax", "Vocabulary",
                "Phraseology", "Grammar", "Conventions"])
    for i in range(12):
        overall = 1 + (i % 9) * 0.5
        level = 1 + round((overall - 1) / 4 * 2)
        text = essay(level, 3 + i % 7) + "\n\n" + essay(level, 2)
        traits = [str(min(5.0, max(1.0, overall + rng.choice([-0.5, 0, 0.5])))) for _ in range(6)]
        w.writerow([f"E{i:04X}", text, str(overall), rng.choice(grades)] + traits)
