import init, { fitRegression, fitCox, augmentationGaps } from "./pkg/sparsekl_demo.js";

const PAD = 40;

function num(id) {
  return Number(document.getElementById(id).value);
}

function frame(canvas, xs, ys) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const pad = 0.05 * (y1 - y0 || 1);
  y0 -= pad;
  y1 += pad;
  const w = canvas.width - 2 * PAD;
  const h = canvas.height - 2 * PAD;
  const sx = (x) => PAD + ((x - x0) / (x1 - x0)) * w;
  const sy = (y) => PAD + h - ((y - y0) / (y1 - y0)) * h;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(PAD, PAD, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(y1.toPrecision(3), 2, PAD + 4);
  ctx.fillText(y0.toPrecision(3), 2, PAD + h);
  ctx.fillText(x0.toPrecision(3), PAD, canvas.height - PAD / 2);
  ctx.fillText(x1.toPrecision(3), PAD + w - 24, canvas.height - PAD / 2);
  return { ctx, sx, sy, y0 };
}

function line(p, xs, ys, color, dash = []) {
  const { ctx, sx, sy } = p;
  ctx.strokeStyle = color;
  ctx.setLineDash(dash);
  ctx.lineWidth = 2;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function dots(p, xs, ys, color, r = 2.5) {
  const { ctx, sx, sy } = p;
  ctx.fillStyle = color;
  xs.forEach((x, i) => {
    ctx.beginPath();
    ctx.arc(sx(x), sy(ys[i]), r, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function ticks(p, xs, color) {
  const { ctx, sx, sy, y0 } = p;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  xs.forEach((x) => {
    ctx.beginPath();
    ctx.moveTo(sx(x), sy(y0));
    ctx.lineTo(sx(x), sy(y0) - 8);
    ctx.stroke();
  });
}

function run(button, stats, work) {
  const out = document.getElementById(stats);
  document.getElementById(button).addEventListener("click", () => {
    out.textContent = "running...";
    // let the status text paint before the synchronous fit
    setTimeout(() => {
      try {
        out.textContent = work();
      } catch (e) {
        out.textContent = `error: ${e.message ?? e}`;
      }
    }, 10);
  });
}

function regression() {
  const v = JSON.parse(
    fitRegression(num("reg-n"), num("reg-m"), num("reg-noise"), document.getElementById("reg-windows").checked, num("reg-seed")),
  );
  const sd = v.variance.map(Math.sqrt);
  const hi = v.mean.map((m, i) => m + 2 * sd[i]);
  const lo = v.mean.map((m, i) => m - 2 * sd[i]);
  const p = frame(document.getElementById("reg-canvas"), v.grid, [...v.y, ...hi, ...lo]);
  line(p, v.grid, hi, "#9bc", [4, 3]);
  line(p, v.grid, lo, "#9bc", [4, 3]);
  line(p, v.grid, v.truth, "#aaa");
  line(p, v.grid, v.mean, "#17a");
  dots(p, v.x, v.y, "#333");
  ticks(p, v.inducing, "#c52");
  return `collapsed bound ${v.collapsed_bound.toFixed(4)}, elbo ${v.elbo.toFixed(4)}, ${v.iterations} iterations`;
}

function cox() {
  const v = JSON.parse(fitCox(num("cox-rate"), num("cox-freq"), num("cox-m"), num("cox-seed")));
  const p = frame(document.getElementById("cox-canvas"), v.grid, [0, ...v.truth, ...v.fitted]);
  line(p, v.grid, v.truth, "#aaa");
  line(p, v.grid, v.fitted, "#17a");
  ticks(p, v.events, "#333");
  dots(p, v.inducing, v.inducing.map(() => 0), "#c52", 3.5);
  return `${v.events.length} events, elbo ${v.elbo.toFixed(3)}, ${v.iterations} iterations`;
}

function gaps() {
  const scales = Array.from({ length: 60 }, (_, i) => 0.2 + (i * 3.8) / 59);
  const v = JSON.parse(augmentationGaps(num("gap-seed"), scales));
  const p = frame(document.getElementById("gap-canvas"), v.scales, [...v.gap, ...v.closed_form]);
  line(p, v.scales, v.closed_form, "#aaa");
  dots(p, v.scales, v.gap, "#17a");
  const err = Math.max(...v.gap.map((g, i) => Math.abs(g - v.closed_form[i])));
  return `KL on data inputs ${v.kl_x.toFixed(4)}, max |gap - (s - 1 - ln s)| ${err.toExponential(2)}`;
}

await init();
run("reg-run", "reg-stats", regression);
run("cox-run", "cox-stats", cox);
run("gap-run", "gap-stats", gaps);
