import init, { breuerMajor, neuralNet, pamCovariance, version } from "./pkg/chaoslab_wasm.js";

const COLORS = ["#1f5fa8", "#c0392b", "#2e8b57"];
const PAD = { l: 60, r: 20, t: 20, b: 36 };

function records(flat, width) {
  const out = [];
  for (let i = 0; i + width <= flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

function draw(canvas, series, { logX = true, logY = true, xLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const fx = logX ? Math.log10 : (v) => v;
  const fy = logY ? Math.log10 : (v) => v;
  const pts = series.map((s) => s.points.filter(([x, y]) => (!logX || x > 0) && (!logY || y > 0)));
  const xs = pts.flat().map((p) => fx(p[0]));
  const ys = pts.flat().map((p) => fy(p[1]));
  if (xs.length === 0) return;
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const sx = (v) => PAD.l + ((fx(v) - x0) / (x1 - x0)) * (w - PAD.l - PAD.r);
  const sy = (v) => h - PAD.b - ((fy(v) - y0) / (y1 - y0)) * (h - PAD.t - PAD.b);

  ctx.strokeStyle = "#444";
  ctx.strokeRect(PAD.l, PAD.t, w - PAD.l - PAD.r, h - PAD.t - PAD.b);
  ctx.fillStyle = "#222";
  ctx.font = "12px sans-serif";
  const fmt = (v, log) => (log ? Number(10 ** v).toPrecision(2) : Number(v).toPrecision(3));
  ctx.fillText(fmt(x0, logX), PAD.l, h - PAD.b + 16);
  ctx.fillText(fmt(x1, logX), w - PAD.r - 40, h - PAD.b + 16);
  ctx.fillText(fmt(y0, logY), 4, h - PAD.b);
  ctx.fillText(fmt(y1, logY), 4, PAD.t + 10);
  ctx.fillText(xLabel, w / 2, h - 6);

  series.forEach((s, k) => {
    ctx.strokeStyle = ctx.fillStyle = COLORS[k % COLORS.length];
    ctx.lineWidth = 2;
    ctx.beginPath();
    pts[k].forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
    pts[k].forEach(([x, y]) => ctx.fillRect(sx(x) - 2, sy(y) - 2, 4, 4));
    ctx.fillText(s.label, w - PAD.r - 180, PAD.t + 16 + 16 * k);
  });
}

function guard(out, f) {
  out.classList.remove("err");
  try {
    f();
  } catch (e) {
    out.textContent = String(e.message ?? e);
    out.classList.add("err");
  }
}

function runBreuerMajor() {
  const out = document.getElementById("bm-out");
  guard(out, () => {
    const coeffs = new Float64Array(document.getElementById("bm-coeffs").value.split(",").map(Number));
    const horizons = new Float64Array([4, 8, 16, 32, 64, 128, 256]);
    const flat = breuerMajor(document.getElementById("bm-shape").value, coeffs, horizons);
    const rows = records(flat.slice(1), 3);
    draw(document.getElementById("bm-plot"), [
      { label: "bound", points: rows.map((r) => [r[0], r[1]]) },
      { label: "|C_T - C_inf|", points: rows.map((r) => [r[0], r[2]]) },
    ], { xLabel: "T" });
    out.textContent = `sigma^2 = ${flat[0].toPrecision(6)}\n` +
      rows.map((r) => `T = ${r[0]}\tbound ${r[1].toExponential(4)}\tgap ${r[2].toExponential(4)}`).join("\n");
  });
}

function runNeuralNet() {
  const out = document.getElementById("nn-out");
  guard(out, () => {
    const widths = new Uint32Array([1, 4, 16, 64, 256, 1024]);
    const rows = records(neuralNet(
      document.getElementById("nn-act").value,
      document.getElementById("nn-input").value,
      widths,
    ), 3);
    draw(document.getElementById("nn-plot"), [
      { label: "bound", points: rows.map((r) => [r[0], r[1]]) },
      { label: "envelope majorant", points: rows.map((r) => [r[0], r[2]]) },
    ], { xLabel: "width n" });
    out.textContent = rows
      .map((r) => `n = ${r[0]}\tbound ${r[1].toExponential(4)}\tmajorant ${r[2].toExponential(4)}`)
      .join("\n");
  });
}

function runPam() {
  const out = document.getElementById("pam-out");
  guard(out, () => {
    const offsets = new Float64Array(Array.from({ length: 13 }, (_, i) => i * 0.5));
    const rows = records(pamCovariance(
      Number(document.getElementById("pam-t").value),
      Number(document.getElementById("pam-n").value),
      offsets,
    ), 3);
    draw(document.getElementById("pam-plot"), [
      { label: "Cov(u(t,z), u(t,0))", points: rows.map((r) => [r[0], r[1]]) },
    ], { logX: false, xLabel: "z" });
    out.textContent = `truncation ratio ${rows[0][2].toFixed(4)}\n` +
      rows.map((r) => `z = ${r[0]}\tcov ${r[1].toExponential(4)}`).join("\n");
  });
}

await init();
document.title = `chaoslab ${version()} demo`;
document.getElementById("bm-run").onclick = runBreuerMajor;
document.getElementById("nn-run").onclick = runNeuralNet;
document.getElementById("pam-run").onclick = runPam;
runBreuerMajor();
runNeuralNet();
