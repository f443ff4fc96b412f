import init, { sbmView, samplerView, miniDea } from "./pkg/dea_wasm_demo.js";

const COLORS = ["#1f77b4", "#ff7f0e"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(outId, fn) {
  try {
    fn();
  } catch (e) {
    $(outId).innerHTML = `<span class="err">${e}</span>`;
  }
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function drawEmbedding() {
  guard("sbm-out", () => {
    const v = JSON.parse(sbmView(num("sbm-block"), num("sbm-pin"), num("sbm-pout"), num("sbm-seed")));
    const canvas = $("sbm-canvas");
    const ctx = clear(canvas);
    const xs = v.points.map((p) => p[0]);
    const ys = v.points.map((p) => p[1]);
    const pad = 20;
    const scale = (vals, size) => {
      const lo = Math.min(...vals), hi = Math.max(...vals);
      const span = hi - lo || 1;
      return (x) => pad + ((x - lo) / span) * (size - 2 * pad);
    };
    const sx = scale(xs, canvas.width), sy = scale(ys, canvas.height);
    ctx.strokeStyle = "rgba(0,0,0,0.08)";
    for (const [i, j] of v.edges) {
      ctx.beginPath();
      ctx.moveTo(sx(xs[i]), sy(ys[i]));
      ctx.lineTo(sx(xs[j]), sy(ys[j]));
      ctx.stroke();
    }
    v.points.forEach((_, i) => {
      ctx.fillStyle = COLORS[v.groups[i] % COLORS.length];
      ctx.beginPath();
      ctx.arc(sx(xs[i]), sy(ys[i]), 3.5, 0, 2 * Math.PI);
      ctx.fill();
    });
    $("sbm-out").textContent =
      `${v.points.length} nodes, ${v.edges.length} edges, homophily ${v.homophily.toFixed(3)} ` +
      `(x = Fiedler vector, y = third eigenvector)`;
  });
}

function bars(canvas, values, color) {
  const ctx = clear(canvas);
  const max = Math.max(...values, 1);
  const w = canvas.width / values.length;
  ctx.fillStyle = color;
  values.forEach((c, b) => {
    const h = (c / max) * (canvas.height - 20);
    ctx.fillRect(b * w + 1, canvas.height - h, w - 2, h);
  });
  return ctx;
}

function drawSampler() {
  $("gs-z-val").textContent = num("gs-z").toFixed(1);
  $("gs-tau-val").textContent = num("gs-tau").toFixed(2);
  guard("gs-out", () => {
    const v = JSON.parse(samplerView(num("gs-z"), num("gs-tau"), num("gs-draws"), 0));
    const canvas = $("gs-canvas");
    const ctx = bars(canvas, v.histogram, "#6a51a3");
    ctx.strokeStyle = "#b00";
    ctx.beginPath();
    ctx.moveTo(canvas.width / 2, 0);
    ctx.lineTo(canvas.width / 2, canvas.height);
    ctx.stroke();
    $("gs-out").textContent =
      `soft mask mean ${v.mean.toFixed(4)}; hard keep rate ${v.keep_rate.toFixed(4)} ` +
      `vs sigmoid(z) = ${v.keep_probability.toFixed(4)} (red line: keep threshold 0.5)`;
  });
}

function lossCurves(canvas, series) {
  const ctx = clear(canvas);
  const all = series.flatMap((s) => s.values);
  const lo = Math.min(...all), hi = Math.max(...all);
  const span = hi - lo || 1;
  const total = series.reduce((n, s) => n + s.values.length, 0);
  let offset = 0;
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.values.forEach((y, k) => {
      const px = ((offset + k) / Math.max(total - 1, 1)) * (canvas.width - 20) + 10;
      const py = canvas.height - 10 - ((y - lo) / span) * (canvas.height - 20);
      k === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
    ctx.stroke();
    offset += s.values.length;
  }
}

function runDea() {
  $("dea-out").textContent = "running...";
  // let the status line paint before the synchronous run
  setTimeout(() => guard("dea-out", () => {
    const t0 = performance.now();
    const v = JSON.parse(miniDea(num("dea-block"), num("dea-pin"), num("dea-pout"),
      num("dea-lambda"), num("dea-epochs"), num("dea-seed")));
    const rows = ["accuracy", "auc", "dp_mixed", "eo_mixed", "dp_group", "eo_group", "dp_subgroup", "eo_subgroup", "threshold"];
    $("dea-table").innerHTML = "<tr><th>metric</th><th>pre-trained</th><th>fine-tuned</th></tr>" +
      rows.map((m) => `<tr><td>${m}</td><td>${v.before[m].toFixed(4)}</td><td>${v.after[m].toFixed(4)}</td></tr>`).join("");
    lossCurves($("dea-canvas"), [
      { values: v.pretrain_losses, color: "#1f77b4" },
      { values: v.finetune_losses, color: "#d62728" },
    ]);
    $("dea-out").textContent =
      `removed ${v.removed} of ${v.kept + v.removed} training edges (${(100 * v.removed_fraction).toFixed(1)}%); ` +
      `loss: pre-training blue, fine-tuning red; ${(performance.now() - t0).toFixed(0)} ms`;
  }), 10);
}

await init();
$("sbm-run").onclick = drawEmbedding;
$("gs-z").oninput = drawSampler;
$("gs-tau").oninput = drawSampler;
$("gs-draws").onchange = drawSampler;
$("dea-run").onclick = runDea;
drawEmbedding();
drawSampler();
