import init, { ladder, DisclosureExplorer, RegistryTamper } from "./pkg/vulncred_demo.js";

const $ = (id) => document.getElementById(id);
const verdict = (ok, yes, no) => `<span class="${ok ? "ok" : "bad"}">${ok ? yes : no}</span>`;
const esc = (s) => String(s).replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);

function runLadder() {
  const r = JSON.parse(ladder($("l-dir").value, +$("l-min").value, +$("l-max").value, +$("l-val").value, +$("l-thr").value));
  if (r.error) {
    $("l-out").innerHTML = `<p class="bad">${esc(r.error)}</p>`;
    return;
  }
  const cells = r.links.map((l) => {
    const cls = ["link", l.seed && "seed", l.witness && "witness", l.anchor && "anchor"].filter(Boolean).join(" ");
    return `<span class="${cls}" title="step ${l.step}">${l.step}: ${l.hash}</span>`;
  });
  if (r.elided) cells.splice(cells.length / 2, 0, `<span class="link">&hellip;</span>`);
  const links = cells.join("");
  $("l-out").innerHTML = `
    <p>Statement <b>${esc(r.statement)}</b>: ${verdict(r.holds, "true", "false")}.
       Proof ${verdict(r.verified, "verifies", "cannot be made")}.
       Handing over the seed itself ${verdict(!r.seed_as_witness_verifies, "does not verify", "verifies")}.</p>
    <p>Chain of ${r.length} hops${r.elided ? " (middle elided)" : ""}: seed, witness, anchor.</p>
    <div class="links">${links}</div>`;
}

let explorer;

function loadClaims() {
  explorer = new DisclosureExplorer();
  const rows = JSON.parse(explorer.claims()).map((c) => {
    const pred = c.ladder
      ? `${c.ladder.op} <input type="number" data-pred="${c.name}" data-op="${c.ladder.op}" placeholder="threshold" min="${c.ladder.min}" max="${c.ladder.max}">`
      : "";
    return `<tr><td><input type="checkbox" data-claim="${c.name}"></td><td>${c.name}</td>
      <td>${esc(JSON.stringify(c.value))}</td><td>${c.group ?? ""}</td><td>${pred}</td></tr>`;
  });
  $("d-claims").tBodies[0].innerHTML = rows.join("");
  $("d-out").innerHTML = "";
}

function runDisclosure() {
  const reveal = [...document.querySelectorAll("[data-claim]:checked")].map((e) => e.dataset.claim);
  const predicates = [...document.querySelectorAll("[data-pred]")]
    .filter((e) => e.value !== "")
    .map((e) => ({ claim: e.dataset.pred, op: e.dataset.op, threshold: +e.value }));
  const r = JSON.parse(explorer.present(JSON.stringify(reveal), JSON.stringify(predicates)));
  if (r.error) {
    $("d-out").innerHTML = `<p class="bad">${esc(r.error)}</p>`;
  } else if (!r.derived) {
    $("d-out").innerHTML = `<p>Holder refused: ${esc(r.holder_error)}. The verifier only sees <b>${r.wire}</b>.</p>`;
  } else {
    const leaks = r.hidden.filter((h) => h.salt_in_bytes || h.value_in_bytes).length;
    $("d-out").innerHTML = `
      <p>${r.bytes} bytes, ${verdict(r.verified, "verified", "rejected: " + r.reason)}.
         ${r.hidden.length} hidden claims, ${verdict(leaks === 0, "none found in the bytes", leaks + " leaked")}.</p>
      <p>Verifier learns:</p><pre>${esc(JSON.stringify(r.facts, null, 2))}</pre>
      <details><summary>Presentation</summary><pre>${esc(JSON.stringify(r.presentation, null, 2))}</pre></details>`;
  }
}

let tamper;
let blocks = [];

function showBlocks() {
  const v = JSON.parse(tamper.blocks());
  blocks = v.blocks;
  $("r-blocks").innerHTML =
    blocks.map((b) => `<span class="block">#${b.index} ${b.kind}<br>${b.hash}<br>${b.bits} bits</span>`).join(" &rarr; ") +
    `<p>Untouched chain ${verdict(v.chain_valid, "verifies", "is broken")}.</p>`;
}

function runFlip(block, bit) {
  const r = JSON.parse(tamper.flip(block, bit));
  if (r.error) {
    $("r-out").innerHTML = `<p class="bad">${esc(r.error)}</p>`;
    return;
  }
  $("r-out").innerHTML = `
    <p>Block ${block}, byte ${r.byte}: ${r.before} &rarr; ${r.after} near <code>${esc(r.context)}</code></p>
    <p>${r.decoded ? "Decoded, then chain " + verdict(!r.chain_valid, "rejected", "ACCEPTED") : "Rejected at strict decode: " + esc(r.decode_error)}</p>`;
}

await init();
$("l-go").onclick = runLadder;
runLadder();
$("d-go").onclick = runDisclosure;
$("d-new").onclick = loadClaims;
loadClaims();
tamper = new RegistryTamper();
showBlocks();
$("r-go").onclick = () => runFlip(+$("r-block").value, +$("r-bit").value);
$("r-rand").onclick = () => {
  const block = Math.floor(Math.random() * blocks.length);
  const bit = Math.floor(Math.random() * blocks[block].bits);
  $("r-block").value = block;
  $("r-bit").value = bit;
  runFlip(block, bit);
};
