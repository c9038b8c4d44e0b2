import init, { exploreLag, whatIf, bestDelays, publishedPccTable } from "./pkg/lagrisk_wasm.js";

const MAX_DELAY = 15;
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(el, err) {
  el.innerHTML = "";
  const span = document.createElement("span");
  span.className = "err";
  span.textContent = String(err.message ?? err);
  el.appendChild(span);
}

function line(ctx, values, lo, hi, color, w, h) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = 10 + (i * (w - 20)) / Math.max(1, values.length - 1);
    const y = h - 10 - ((v - lo) / (hi - lo || 1)) * (h - 20);
    i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
  });
  ctx.stroke();
}

function normalized(v) {
  const lo = Math.min(...v), hi = Math.max(...v);
  return v.map((x) => (x - lo) / (hi - lo || 1));
}

function drawSeries(canvas, pollutant, cases) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  line(ctx, normalized(pollutant), 0, 1, "#3366cc", w, h);
  line(ctx, normalized(cases), 0, 1, "#dc3912", w, h);
  ctx.fillStyle = "#3366cc"; ctx.fillText("pollutant", 12, 14);
  ctx.fillStyle = "#dc3912"; ctx.fillText("cases", 70, 14);
}

function drawBars(canvas, report) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const mid = h / 2;
  const bw = (w - 20) / (MAX_DELAY + 1);
  ctx.strokeStyle = "#999";
  ctx.beginPath(); ctx.moveTo(10, mid); ctx.lineTo(w - 10, mid); ctx.stroke();
  for (const e of report.entries) {
    const x = 10 + e.delay_units * bw;
    const bh = e.pcc * (mid - 12);
    ctx.fillStyle = e.delay_units === report.best_delay_units ? "#dc3912" : "#88a";
    ctx.fillRect(x + 1, mid - Math.max(bh, 0), bw - 2, Math.abs(bh));
    ctx.fillStyle = "#444";
    ctx.fillText(String(e.delay_units), x + bw / 2 - 3, h - 2);
  }
}

function runLag() {
  $("lag-noise-v").textContent = $("lag-noise").value;
  try {
    const r = JSON.parse(exploreLag(num("lag-k"), num("lag-noise"), num("lag-seed"), MAX_DELAY, num("lag-overlap")));
    drawSeries($("lag-series"), r.pollutant, r.cases);
    drawBars($("lag-bars"), r.report);
    const rep = r.report;
    $("lag-out").textContent =
      `Best delay ${rep.best_delay_units} buckets = ${rep.best_delay_days} days (PCC ${rep.best_pcc.toFixed(4)}, ` +
      `${r.scatter.points.length} points); ${(rep.skipped ?? []).length} delay(s) skipped for overlap.`;
  } catch (err) {
    fail($("lag-out"), err);
  }
}

// Green, amber, red by level, shaded by the risk value.
const LEVEL_HUE = { low: 120, medium: 40, high: 0 };

function drawMap(canvas, map) {
  const ctx = canvas.getContext("2d");
  const cw = canvas.width / map.cols, ch = canvas.height / map.rows;
  map.risk.forEach((r, i) => {
    const row = Math.floor(i / map.cols), col = i % map.cols;
    ctx.fillStyle = `hsl(${LEVEL_HUE[map.level[i]]}, 70%, ${85 - 45 * r}%)`;
    ctx.fillRect(col * cw, row * ch, cw, ch);
    ctx.fillStyle = "#000";
    ctx.fillText(r.toFixed(2), col * cw + 4, row * ch + 14);
  });
}

function drawTrajectory(canvas, base, scen, step) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  line(ctx, base, 0, 1, "#999", w, h);
  line(ctx, scen, 0, 1, "#dc3912", w, h);
  const x = 10 + (step * (w - 20)) / Math.max(1, base.length - 1);
  ctx.strokeStyle = "#ccc";
  ctx.beginPath(); ctx.moveTo(x, 0); ctx.lineTo(x, h); ctx.stroke();
  ctx.fillStyle = "#999"; ctx.fillText("baseline mean risk", 12, 14);
  ctx.fillStyle = "#dc3912"; ctx.fillText("scenario", 120, 14);
}

function runWhatIf() {
  $("wi-factor-v").textContent = $("wi-factor").value;
  const step = num("wi-step");
  try {
    const r = JSON.parse(whatIf(num("wi-factor"), num("wi-first"), num("wi-last"), 0.33, 0.66));
    $("wi-step-v").textContent = `${step} (${r.dates[step]})`;
    drawMap($("wi-base"), r.baseline[step]);
    drawMap($("wi-scen"), r.scenario[step]);
    drawTrajectory($("wi-traj"), r.baseline_mean_risk, r.scenario_mean_risk, step);
    const b = r.baseline_mean_risk[step], s = r.scenario_mean_risk[step];
    $("wi-out").textContent =
      `Step ${step}: mean risk ${b.toFixed(3)} at baseline, ${s.toFixed(3)} under the scenario (${(s - b >= 0 ? "+" : "") + (s - b).toFixed(3)}).`;
  } catch (err) {
    fail($("wi-out"), err);
  }
}

function runTable() {
  try {
    const rows = JSON.parse(bestDelays($("tbl-csv").value, num("tbl-window")));
    const t = document.createElement("table");
    t.innerHTML = "<tr><th>region</th><th>best delay</th><th>days</th><th>PCC</th></tr>";
    for (const r of rows) {
      const tr = t.insertRow();
      for (const v of [r.region, r.best_delay_units, r.best_delay_days, r.best_pcc.toFixed(4)]) {
        tr.insertCell().textContent = v;
      }
    }
    $("tbl-out").replaceChildren(t);
  } catch (err) {
    fail($("tbl-out"), err);
  }
}

await init();
$("tbl-csv").value = publishedPccTable();
for (const id of ["lag-k", "lag-noise", "lag-seed", "lag-overlap"]) $(id).addEventListener("input", runLag);
for (const id of ["wi-factor", "wi-first", "wi-last", "wi-step"]) $(id).addEventListener("input", runWhatIf);
for (const id of ["tbl-csv", "tbl-window"]) $(id).addEventListener("input", runTable);
runLag();
runWhatIf();
runTable();
