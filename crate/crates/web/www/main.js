import init, { convolve, weightedSum, support } from "./pkg/freeconv_web.js";

const $ = (id) => document.getElementById(id);

// Plots the density in blue over the semicircle in grey, clipped to the
// visible range of x.
function plot(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const lo = Math.max(xs[0], -3.5);
  const hi = Math.min(xs[xs.length - 1], 3.5);
  let top = 0;
  for (const s of series) for (const v of s.ys) if (Number.isFinite(v)) top = Math.max(top, v);
  top = Math.min(top, 1.5) * 1.05 || 1;
  const px = (x) => ((x - lo) / (hi - lo)) * w;
  const py = (y) => h - 20 - (Math.min(y, top) / top) * (h - 30);

  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(0, py(0));
  ctx.lineTo(w, py(0));
  ctx.stroke();
  ctx.fillStyle = "#666";
  ctx.font = "12px sans-serif";
  for (let t = Math.ceil(lo); t <= hi; t++) ctx.fillText(String(t), px(t) - 3, h - 4);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width;
    ctx.beginPath();
    let started = false;
    xs.forEach((x, i) => {
      if (x < lo || x > hi) return;
      if (started) ctx.lineTo(px(x), py(s.ys[i]));
      else ctx.moveTo(px(x), py(s.ys[i]));
      started = true;
    });
    ctx.stroke();
  }
}

function show(el, text, failed = false) {
  el.textContent = text;
  el.className = failed ? "out err" : "out";
}

function runConvolve() {
  const out = $("cv-out");
  try {
    const t0 = performance.now();
    const r = JSON.parse(convolve($("cv-list").value, Number($("cv-points").value), Number($("cv-eta").value)));
    plot($("cv-plot"), r.x, [
      { ys: r.semicircle, color: "#bbb", width: 1.5 },
      { ys: r.density, color: "#1f5fbf", width: 2 },
    ]);
    show(out, `mass outside window ${r.tail_mass.toExponential(2)}, ${(performance.now() - t0).toFixed(0)} ms`);
  } catch (e) {
    show(out, String(e.message ?? e), true);
  }
}

function runWeighted() {
  const out = $("ws-out");
  const n = Number($("ws-n").value);
  $("ws-n-val").textContent = n;
  try {
    const r = JSON.parse(
      weightedSum($("ws-preset").value, n, $("ws-random").checked, Number($("ws-seed").value), 2001, 1e-3),
    );
    plot($("ws-plot"), r.x, [
      { ys: r.semicircle, color: "#bbb", width: 1.5 },
      { ys: r.density, color: "#1f5fbf", width: 2 },
    ]);
    const maxTheta = Math.max(...r.theta.map(Math.abs));
    show(
      out,
      `Kolmogorov distance to the semicircle law ${r.kolmogorov.toFixed(5)} ± ${r.kolmogorov_error.toExponential(1)}\n` +
        `largest weight ${maxTheta.toFixed(4)}`,
    );
  } catch (e) {
    show(out, String(e.message ?? e), true);
  }
}

function runSupport() {
  const out = $("sp-out");
  try {
    const r = JSON.parse(support($("sp-preset").value, Number($("sp-n").value), $("sp-random").checked, 1));
    const iv = (a) => `[${a[0].toFixed(5)}, ${a[1].toFixed(5)}]`;
    const flag = (f) => (f === null ? "not applicable" : f ? "yes" : "no");
    show(
      out,
      [
        `detected support   ${r.detected_support ? iv(r.detected_support) : "none"}`,
        `cumulant enclosure ${iv(r.kargin_interval)}  contained: ${flag(r.contained_kargin)}`,
        `r_theta enclosure  ${iv(r.paper_interval)}  contained: ${flag(r.contained_paper)}`,
        `r_theta = ${r.r_theta.toPrecision(6)}, preconditions met: ${r.preconditions_met}`,
      ].join("\n"),
    );
  } catch (e) {
    show(out, String(e.message ?? e), true);
  }
}

await init();
$("cv-run").addEventListener("click", runConvolve);
for (const id of ["ws-n", "ws-random", "ws-seed", "ws-preset"]) $(id).addEventListener("input", runWeighted);
$("sp-run").addEventListener("click", runSupport);
runConvolve();
runWeighted();
