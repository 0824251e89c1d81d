import init, { Demo } from "./pkg/curate_wasm.js";

const $ = (id) => document.getElementById(id);
const palette = ["#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d35400"];

await init();
const demo = new Demo(4, 40, 7n);

function call(result) {
  const value = JSON.parse(result);
  $("error").textContent = value.error ? `${value.error}: ${value.message ?? ""}` : "";
  if (value.blocked_by) $("error").textContent = `blocked by ${value.blocked_by}`;
  return value.error || value.blocked_by ? null : value;
}

function pick(docId) {
  const ids = $("archetypes").value.split(",").map((s) => s.trim()).filter(Boolean);
  if (!ids.includes(docId)) ids.push(docId);
  $("archetypes").value = ids.join(", ");
}

function fill(list, docs) {
  list.replaceChildren();
  for (const d of docs) {
    const li = document.createElement("li");
    li.className = `t${d.theme % palette.length}`;
    const id = document.createElement("span");
    id.className = "id";
    id.textContent = d.doc_id;
    id.onclick = () => pick(d.doc_id);
    const score = d.score === undefined ? "" : ` (${d.score.toFixed(3)})`;
    li.append(id, `${score} ${d.text}`);
    list.append(li);
  }
}

$("run-search").onclick = () => {
  const out = call(demo.search($("query").value));
  if (!out) return;
  $("search-count").textContent = `${out.count} matches`;
  fill($("search-results"), out.docs);
};

$("run-rank").onclick = () => {
  const out = call(demo.rank($("archetypes").value, Number($("top").value) || 10));
  if (out) fill($("rank-results"), out.docs);
};

$("run-project").onclick = () => {
  const out = call(demo.project(BigInt($("seed").value || 0)));
  if (!out) return;
  $("project-summary").textContent =
    `${out.points.length} documents, ${out.clusters} clusters. Fill shows the cluster, the ring shows the planted theme.`;
  draw(out.points);
};

function draw(points) {
  const canvas = $("map");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (points.length === 0) return;
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  const sx = (x) => 20 + ((x - x0) / (x1 - x0 || 1)) * (canvas.width - 40);
  const sy = (y) => 20 + ((y - y0) / (y1 - y0 || 1)) * (canvas.height - 40);
  for (const p of points) {
    ctx.beginPath();
    ctx.arc(sx(p.x), sy(p.y), 5, 0, 2 * Math.PI);
    ctx.fillStyle = p.cluster === null ? "#bbb" : palette[p.cluster % palette.length];
    ctx.fill();
    ctx.strokeStyle = palette[p.theme % palette.length];
    ctx.lineWidth = 2;
    ctx.stroke();
  }
}

$("query").value = JSON.parse(demo.documents())[0].text.split(" ")[0];
$("run-search").click();
