import init, { FaceDemo } from "./pkg/rigserve_web.js";

await init();

const demo = new FaceDemo();
const canvas = document.getElementById("face");
const ctx = canvas.getContext("2d");
const names = FaceDemo.bone_names();
const $ = (id) => document.getElementById(id);
const sliders = new Map();

function draw() {
  const p = demo.project(canvas.width, canvas.height);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < names.length; i++) {
    const x = p[2 * i], y = p[2 * i + 1];
    ctx.fillStyle = /Lip|Jaw|Chin/.test(names[i]) ? "#c33" : "#333";
    ctx.beginPath();
    ctx.arc(x, y, 5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#888";
    ctx.fillText(names[i], x + 7, y + 3);
  }
  $("visemes").textContent = demo.visemes();
}

function syncSliders() {
  for (const [au, input] of sliders) input.value = demo.au(au);
}

for (const au of FaceDemo.au_numbers()) {
  const label = document.createElement("label");
  const input = document.createElement("input");
  const out = document.createElement("span");
  Object.assign(input, { type: "range", min: 0, max: 1, step: 0.01, value: 0 });
  input.addEventListener("input", () => {
    demo.set_au(au, Number(input.value));
    out.textContent = Number(input.value).toFixed(2);
    draw();
  });
  label.append(`AU${au}`, input, out);
  $("aus").append(label);
  sliders.set(au, input);
}

for (const e of demo.emotions()) $("emotion").add(new Option(e, e));
function applyEmotion() {
  demo.set_emotion($("emotion").value, Number($("intensity").value));
  syncSliders();
  draw();
}
$("emotion").addEventListener("change", applyEmotion);
$("intensity").addEventListener("input", applyEmotion);

$("clear").addEventListener("click", () => {
  demo.clear();
  $("scrub").max = 0;
  syncSliders();
  draw();
});

let playing = null;
$("say").addEventListener("click", () => {
  $("error").textContent = "";
  let length;
  try {
    length = demo.say($("phrase").value, 12.5);
  } catch (err) {
    $("error").textContent = err;
    return;
  }
  $("scrub").max = Math.ceil(length);
  if (playing) cancelAnimationFrame(playing);
  const start = performance.now();
  const step = (now) => {
    const t = Math.min(now - start, length);
    demo.scrub(t);
    $("scrub").value = t;
    draw();
    playing = t < length ? requestAnimationFrame(step) : null;
  };
  playing = requestAnimationFrame(step);
});

$("scrub").addEventListener("input", () => {
  if (playing) cancelAnimationFrame(playing);
  playing = null;
  demo.scrub(Number($("scrub").value));
  draw();
});

$("mask").addEventListener("change", () => {
  demo.set_mask($("mask").checked);
  draw();
});

for (const id of ["yaw", "pitch", "roll"]) {
  $(id).addEventListener("input", () => {
    demo.set_head(Number($("yaw").value), Number($("pitch").value), Number($("roll").value));
    draw();
  });
}

draw();
