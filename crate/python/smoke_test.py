"""Smoke test for the plaincode_py extension module.

Build it first:  cargo build --release -p plaincode-py --features extension-module
"""

import importlib.util
import json
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent

ZOO = """
public enum EyeColor { BROWN, BLUE, GREEN }

public class Habitat {
    private String coordinate;
    private double area;

    public Habitat(String coordinate) {
        this.coordinate = coordinate;
        this.area = 1.0;
    }

    public void grow(int amount) {
        this.area = this.area + amount / 42.0;
    }

    public double scaled(double f, double g) {
        double s = this.area * f;
        return s * g;
    }
}

public class Monkey {
    private int age;
    public EyeColor eyeColor;
    public Habitat habitat;

    public Monkey(int age, EyeColor eyeColor, Habitat habitat) {
        this.age = age;
        this.eyeColor = eyeColor;
        this.habitat = habitat;
    }

    public int ageIn(int years) {
        int later = this.age + years;
        return later;
    }
}
"""

MAIN = """
public class Main {
    public static void main() {
        Habitat h = new Habitat("42, 42");
        h.grow(42);
        double a = h.scaled(2.0, 0.5);
        Monkey m = new Monkey(3, EyeColor.BROWN, h);
        int later = m.ageIn(4);
    }
}
"""


def load():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libplaincode_py.so"
        if lib.exists():
            break
    else:
        sys.exit("libplaincode_py.so not found; build the plaincode-py crate first")
    staged = pathlib.Path(tempfile.mkdtemp()) / "plaincode_py.so"
    shutil.copy(lib, staged)
    spec = importlib.util.spec_from_file_location("plaincode_py", staged)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    pc = load()
    app = [("zoo.mj", ZOO), ("main.mj", MAIN)]

    db = pc.analyze(app)
    assert db.points == ["Habitat.scaled", "Monkey.ageIn"], db.points
    assert db.planned == ["Monkey"], db.planned
    assert "Habitat" in db.infeasible
    plan = json.loads(db.plan_json("Monkey"))
    assert plan["totalCost"] == 1 and len(plan["actions"]) == 1
    assert pc.PlanDb.parse(db.to_text()).planned == db.planned

    rec = pc.record(app, db)
    assert rec.events > 0 and rec.records == 2, (rec.events, rec.records)

    suite = pc.generate(db, rec.trace)
    assert suite.emitted == 2 and suite.emitted + suite.discarded == suite.unique
    assert sorted(suite.files) == ["HabitatTest.mj", "MonkeyTest.mj"], sorted(suite.files)
    assert json.loads(suite.report_json())["emitted"] == 2

    verdict = pc.verify_tests(app, suite.files)
    assert verdict.ok and verdict.passed == 2, verdict.failures

    report = pc.run_corpus(42, 20)
    assert report.equal == 20 and report.tests_failed == 0, report.summary()

    try:
        pc.analyze([("bad.mj", "class {")])
    except pc.PlaincodeError as e:
        print("compile error surfaced:", e)
    else:
        raise AssertionError("expected PlaincodeError")

    print(report.summary())
    print("smoke test passed")


if __name__ == "__main__":
    main()
