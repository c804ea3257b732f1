import init, { Explorer, generate_scene, hog_glyphs, kernel_curve } from "./pkg/vqlens_wasm.js";

const $ = (id) => document.getElementById(id);
const SCALE = 3;
let image = { width: 96, height: 96, pixels: null };
let explorer = null;
let explorerPatch = 0;
let sceneSeed = 1;

function show(canvas, pixels, width, height) {
  canvas.width = width;
  canvas.height = height;
  canvas.style.width = `${width * SCALE}px`;
  canvas.style.height = `${height * SCALE}px`;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(pixels), width, height), 0, 0);
}

function status(text) {
  $("status").textContent = text;
}

// Let the browser paint the status line before a long synchronous call.
const nextFrame = () => new Promise((r) => requestAnimationFrame(() => setTimeout(r, 0)));

function setImage(pixels, width, height) {
  image = { width, height, pixels };
  show($("source"), pixels, width, height);
  drawGlyphs();
}

async function reconstructImage() {
  const patch = Number($("patch").value);
  if (!explorer || explorerPatch !== patch) {
    status(`training a ${patch}px inverter on generated scenes...`);
    await nextFrame();
    explorer?.free();
    explorer = new Explorer(patch, 24, 7);
    explorerPatch = patch;
  }
  const stride = Math.min(Number($("stride").value), patch);
  const k = Number($("k").value);
  status(k > 0 ? `clustering ${k} words and reconstructing...` : "reconstructing...");
  await nextFrame();
  const t0 = performance.now();
  const out = explorer.reconstruct(image.pixels, image.width, image.height, stride, k);
  const ms = performance.now() - t0;
  show($("recon"), out, image.width, image.height);
  const mse = explorer.mse(image.pixels, out, image.width, image.height);
  const words = k > 0 ? `${k} words` : "no quantization";
  $("recon-caption").textContent = `patch ${patch}, stride ${stride}, ${words}: MSE ${mse.toFixed(4)} (${ms.toFixed(0)} ms)`;
  status("");
}

function drawGlyphs() {
  const patch = Number($("glyph-patch").value);
  show($("glyphs"), hog_glyphs(image.pixels, image.width, image.height, patch), image.width, image.height);
}

function drawCurve() {
  const n = Number($("order").value);
  const gamma = Number($("gamma").value);
  $("order-value").textContent = n;
  $("gamma-value").textContent = gamma.toFixed(2);
  const data = kernel_curve(n, gamma, 241);
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  let top = 0;
  for (let i = 0; i < data.length; i += 3) top = Math.max(top, data[i + 1], data[i + 2]);
  const px = (y) => ((Math.log10(y) + 3) / 6) * (width - 20) + 10;
  const py = (v) => height - 10 - (v / (top * 1.05)) * (height - 20);
  ctx.strokeStyle = "#ccc";
  ctx.beginPath();
  ctx.moveTo(px(1), 0);
  ctx.lineTo(px(1), height);
  ctx.stroke();
  for (const [offset, colour] of [[1, "#000"], [2, "#c00"]]) {
    ctx.strokeStyle = colour;
    ctx.beginPath();
    for (let i = 0; i < data.length; i += 3) {
      const x = px(data[i]);
      const y = py(data[i + offset]);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    }
    ctx.stroke();
  }
}

function newScene() {
  sceneSeed += 1;
  setImage(generate_scene(96, sceneSeed), 96, 96);
}

function loadFile(file) {
  const img = new Image();
  img.onload = () => {
    const scale = Math.min(1, 128 / Math.max(img.width, img.height));
    const width = Math.max(16, Math.round(img.width * scale));
    const height = Math.max(16, Math.round(img.height * scale));
    const c = document.createElement("canvas");
    c.width = width;
    c.height = height;
    const ctx = c.getContext("2d");
    ctx.drawImage(img, 0, 0, width, height);
    setImage(ctx.getImageData(0, 0, width, height).data, width, height);
    URL.revokeObjectURL(img.src);
  };
  img.src = URL.createObjectURL(file);
}

async function main() {
  await init();
  $("new-scene").onclick = newScene;
  $("upload").onchange = (e) => e.target.files[0] && loadFile(e.target.files[0]);
  $("run").onclick = () => reconstructImage().catch((e) => status(String(e)));
  $("glyph-patch").onchange = drawGlyphs;
  $("order").oninput = drawCurve;
  $("gamma").oninput = drawCurve;
  newScene();
  drawCurve();
  status("");
}

main().catch((e) => status(String(e)));
