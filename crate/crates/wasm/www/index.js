import init, { weight_curve, fichera_face, exit_curve } from "./pkg/arblab_wasm.js";

const num = (id) => Number(document.getElementById(id).value);

function plot(canvas, series, { xLabel, yLabel, yMin, yMax }) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);

  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = yMin ?? Math.min(...ys), y1 = yMax ?? Math.max(...ys);
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
  if (y0 < 0 && y1 > 0) {
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(pad, py(0));
    ctx.lineTo(w - pad, py(0));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(xLabel, w / 2, h - 8);
  ctx.fillText(yLabel, 4, 16);
  ctx.fillText(y1.toFixed(3), 2, pad);
  ctx.fillText(y0.toFixed(3), 2, h - pad);
  ctx.fillText(x0.toFixed(2), pad, h - pad + 14);
  ctx.fillText(x1.toFixed(2), w - pad - 20, h - pad + 14);

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color;
    if (s.points) {
      s.x.forEach((x, i) => ctx.fillRect(px(x) - 2, py(s.y[i]) - 2, 4, 4));
    } else {
      ctx.beginPath();
      s.x.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.y[i])) : ctx.moveTo(px(x), py(s.y[i]))));
      ctx.stroke();
    }
    ctx.fillText(s.label, w - pad - 140, pad + 14 * k);
  });
}

function guarded(msgId, fn) {
  const msg = document.getElementById(msgId);
  return () => {
    msg.className = "note";
    msg.textContent = "working…";
    setTimeout(() => {
      const t = performance.now();
      try {
        fn();
        msg.textContent = `${(performance.now() - t).toFixed(0)} ms`;
      } catch (e) {
        msg.className = "err";
        msg.textContent = String(e);
      }
    }, 10);
  };
}

function runWeights() {
  const k = 101;
  const v = weight_curve(num("q-zeta"), num("q-T"), k);
  const m = Array.from(v.slice(0, k));
  const q = Array.from(v.slice(k));
  plot(document.getElementById("q-plot"), [{ x: m, y: q, color: "#1f77b4", label: "Q(T, m)" }], {
    xLabel: "m₁",
    yLabel: "Q",
    yMin: 0,
    yMax: 1,
  });
}

function runFichera() {
  const v = fichera_face(num("f-zeta"), num("f-n"), num("f-face"), 200);
  const s = [], f = [], fh = [];
  for (let i = 0; i < v.length; i += 3) {
    s.push(v[i]);
    f.push(v[i + 1]);
    fh.push(v[i + 2]);
  }
  plot(
    document.getElementById("f-plot"),
    [
      { x: s, y: f, color: "#2ca02c", label: "f_i (market)", points: true },
      { x: s, y: fh, color: "#d62728", label: "f̂_i (auxiliary)", points: true },
    ],
    { xLabel: "Σx on the face", yLabel: "drift" },
  );
}

function runExit() {
  const v = exit_curve(num("e-zeta"), num("e-x1"), num("e-x2"), num("e-T"), num("e-paths"), num("e-seed"));
  const t = [], p = [], lo = [], hi = [], u = [];
  for (let i = 0; i < v.length; i += 4) {
    t.push(v[i]);
    p.push(v[i + 1]);
    lo.push(v[i + 1] - 2 * v[i + 2]);
    hi.push(v[i + 1] + 2 * v[i + 2]);
    u.push(v[i + 3]);
  }
  plot(
    document.getElementById("e-plot"),
    [
      { x: t, y: p, color: "#1f77b4", label: "Monte Carlo", points: true },
      { x: t, y: lo, color: "#aec7e8", label: "± 2 s.e." },
      { x: t, y: hi, color: "#aec7e8", label: "" },
      { x: t, y: u, color: "#ff7f0e", label: "PDE U(t, x)" },
    ],
    { xLabel: "t", yLabel: "survival", yMin: 0, yMax: 1 },
  );
}

await init();
document.getElementById("q-run").addEventListener("click", guarded("q-msg", runWeights));
document.getElementById("f-run").addEventListener("click", guarded("f-msg", runFichera));
document.getElementById("e-run").addEventListener("click", guarded("e-msg", runExit));
guarded("q-msg", runWeights)();
guarded("f-msg", runFichera)();
