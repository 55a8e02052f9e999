import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { main, parseArgs } from "../src/cli.js";

let dir: string;

function writeRun(d: string) {
  fs.mkdirSync(d, { recursive: true });
  const lines = ["sample_id,t,tau,x_1,y_1,y_2"];
  for (let i = 0; i < 3; i++) {
    for (let k = 0; k <= 6; k++) {
      const t = k / 6;
      lines.push(`${i},${t},${-7 + 15 * t},${i * t},${1 - t},${0.2}`);
    }
  }
  fs.writeFileSync(path.join(d, "trajectories.csv"), lines.join("\n") + "\n");
  fs.writeFileSync(
    path.join(d, "metrics.csv"),
    "epoch,train_loss,val_loss,L1,L2,L3,monotonicity_error,recon_error,lr\n" +
      "0,10.0,9.0,1.0,2.0,3.0,0.4,0.3,0.001\n" +
      "1,5.0,4.0,0.5,1.0,1.5,0.0,0.2,0.001\n" +
      "2,2.0,2.0,0.2,0.5,0.7,0.001,0.1,0.001\n",
  );
  fs.writeFileSync(
    path.join(d, "manifest.json"),
    JSON.stringify({ config: { task: "spiral", data: { v: 1.0 }, space: { tau1: 0.0, tau2: 1.0 } } }),
  );
}

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "figs-"));
  writeRun(path.join(dir, "run"));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

describe("argument parsing", () => {
  it("requires a known kind and both flags", () => {
    expect(() => parseArgs(["nope", "--in", "x", "--out", "y"])).toThrow(/unknown kind/);
    expect(() => parseArgs(["monotonicity", "--in", "x"])).toThrow(/--out/);
  });
});

describe("end-to-end rendering", () => {
  const kinds = ["flow-lines", "time-slices", "monotonicity"] as const;

  for (const kind of kinds) {
    it(`renders ${kind} from a run directory`, () => {
      const out = path.join(dir, `${kind}.svg`);
      const rc = main([kind, "--in", path.join(dir, "run"), "--out", out]);
      expect(rc).toBe(0);
      const svg = fs.readFileSync(out, "utf-8");
      expect(svg.startsWith("<svg")).toBe(true);
    });
  }

  it("renders recon-error across several runs", () => {
    writeRun(path.join(dir, "run2"));
    const out = path.join(dir, "bars.svg");
    const rc = main([
      "recon-error",
      "--in", path.join(dir, "run"),
      "--in", path.join(dir, "run2"),
      "--out", out,
    ]);
    expect(rc).toBe(0);
    expect(fs.readFileSync(out, "utf-8")).toContain("v=1");
  });

  it("renders classifier artifacts", () => {
    const d = path.join(dir, "cls");
    fs.mkdirSync(d);
    fs.writeFileSync(
      path.join(d, "trajectories.csv"),
      "sample_id,t,x,y,z\n0,0,-2,0,0\n0,1,-3,4,0\n1,0,2,0,0\n1,1,3,4,0\n",
    );
    fs.writeFileSync(path.join(d, "trajectory_labels.csv"), "sample_id,label\n0,0\n1,2\n");
    fs.writeFileSync(path.join(d, "targets.csv"), "label,x,y,z\n0,-3,4,0\n1,0,5,0\n2,3,4,0\n");
    const out = path.join(dir, "cls.svg");
    expect(main(["classifier", "--in", d, "--out", out])).toBe(0);
    expect(fs.existsSync(out)).toBe(true);
  });

  it("re-rendering is byte-identical and leaves inputs untouched", () => {
    const input = path.join(dir, "run", "trajectories.csv");
    const before = fs.readFileSync(input, "utf-8");
    const out1 = path.join(dir, "a.svg");
    const out2 = path.join(dir, "b.svg");
    main(["flow-lines", "--in", path.join(dir, "run"), "--out", out1]);
    main(["flow-lines", "--in", path.join(dir, "run"), "--out", out2]);
    expect(fs.readFileSync(out1, "utf-8")).toBe(fs.readFileSync(out2, "utf-8"));
    expect(fs.readFileSync(input, "utf-8")).toBe(before);
  });

  it("reports schema mismatches with column diagnostics", () => {
    const d = path.join(dir, "bad");
    fs.mkdirSync(d);
    fs.writeFileSync(path.join(d, "metrics.csv"), "epoch,something\n0,1\n");
    const rc = main(["monotonicity", "--in", d, "--out", path.join(dir, "x.svg")]);
    expect(rc).toBe(2);
  });

  it("fails cleanly on a missing artifact", () => {
    const rc = main(["monotonicity", "--in", path.join(dir, "absent"), "--out", path.join(dir, "x.svg")]);
    expect(rc).toBe(2);
  });
});
