import init, { bounds, select, scenarios, run } from "./pkg/kquorum_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(target, fn) {
  try {
    fn();
  } catch (e) {
    target.textContent = "error: " + (e.message ?? e);
  }
}

function showBounds() {
  guard($("bounds-out"), () => {
    const r = JSON.parse(bounds(num("n"), num("f"), num("m"), num("k1"), num("k2"), num("mu")));
    const lines = r.conditions.map((c) => `${c.pass ? "ok  " : "FAIL"} ${c.name}: ${c.detail}`);
    const b = r.bounds;
    const fmt = (x) => (x === null ? "undefined" : x.toFixed(6));
    lines.push(
      "",
      `k2'                       ${b.k2_prime ?? "undefined"}`,
      `non-intersection bound    ${fmt(b.eps_bound)}`,
      `intersection bound sync   ${fmt(b.delta_bound_sync)}`,
      `intersection bound async  ${fmt(b.delta_bound_async)}`,
      `witness threshold         ${b.witness_threshold}`,
    );
    $("bounds-out").textContent = lines.join("\n");
  });
}

function showSelection() {
  const out = $("select-out");
  guard(out, () => {
    const r = JSON.parse(select($("seed-str").value, num("n"), num("m"), num("f")));
    out.innerHTML = "";
    for (const v of r.members) {
      const s = document.createElement("span");
      s.className = v < num("f") ? "member bad" : "member";
      s.textContent = v;
      out.appendChild(s);
    }
    out.appendChild(document.createTextNode(` ${r.corrupted} of ${r.members.length} corrupted`));
  });
}

function runScenario() {
  const table = $("report");
  guard($("events"), () => {
    const r = JSON.parse(run($("scenario").value, BigInt(num("run-seed"))));
    table.innerHTML = "";
    for (const f of [...r.report.requirements, ...r.report.invariants]) {
      const row = table.insertRow();
      row.insertCell().textContent = f.verdict;
      row.cells[0].className = f.verdict;
      row.insertCell().textContent = f.name;
      row.insertCell().textContent = f.detail;
    }
    const head = [`exit code ${r.exit_code}, ${r.records} records, digest ${r.digest.slice(0, 16)}`, ...r.warnings];
    $("events").textContent = [...head, "", ...r.events].join("\n");
  });
}

await init();
const list = JSON.parse(scenarios());
for (const s of list) $("scenario").add(new Option(s.name, s.name));
const describe = () => ($("scenario-desc").textContent = list.find((s) => s.name === $("scenario").value)?.description ?? "");
$("scenario").addEventListener("change", describe);
describe();
$("bounds-btn").addEventListener("click", showBounds);
$("select-btn").addEventListener("click", showSelection);
$("run-btn").addEventListener("click", runScenario);
$("status").textContent = "ready";
showBounds();
