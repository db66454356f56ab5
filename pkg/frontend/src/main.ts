// DOM wiring for the operator console.

import { ConsoleClient } from './client.js';
import {
  Direction,
  eyeCommand,
  gainsCommand,
  haltCommand,
  modeCommand,
  thoughtCommand,
  ThoughtLabel,
} from './protocol.js';
import { drawScene } from './render.js';
import { ConsoleState } from './state.js';

function wsUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const explicit = params.get('ws');
  if (explicit) return explicit;
  const scheme = window.location.protocol === 'https:' ? 'wss' : 'ws';
  return `${scheme}://${window.location.host}/ws`;
}

const state = new ConsoleState();
const client = new ConsoleClient(wsUrl(), state);
client.connect();

const canvas = document.getElementById('scene') as HTMLCanvasElement;
const ctx = canvas.getContext('2d')!;
const statusEl = document.getElementById('status')!;
const errorEl = document.getElementById('error')!;
const tickerEl = document.getElementById('ticker')!;
const thetaEl = document.getElementById('theta')!;
const barAgg = document.getElementById('bar-aggregate') as HTMLDivElement;
const barDisp = document.getElementById('bar-disperse') as HTMLDivElement;

for (const dir of ['Left', 'Right', 'Up', 'Down'] as Direction[]) {
  document.getElementById(`btn-${dir.toLowerCase()}`)!
    .addEventListener('click', () => client.send(eyeCommand(dir)));
}
document.getElementById('btn-halt')!
  .addEventListener('click', () => client.send(haltCommand()));
for (const label of ['Aggregate', 'Disperse'] as ThoughtLabel[]) {
  document.getElementById(`btn-${label.toLowerCase()}`)!
    .addEventListener('click', () => client.send(thoughtCommand(label)));
}
document.getElementById('btn-gains')!.addEventListener('click', () => {
  const a = Number((document.getElementById('gain-a') as HTMLInputElement).value);
  const b = Number((document.getElementById('gain-b') as HTMLInputElement).value);
  try {
    client.send(gainsCommand(a, b));
    errorEl.textContent = '';
  } catch (err) {
    errorEl.textContent = String(err); // blocked client-side
  }
});
const modeToggle = document.getElementById('mode-toggle') as HTMLInputElement;
modeToggle.addEventListener('change', () => {
  state.mode = modeToggle.checked ? 'manual' : 'decoded';
  client.send(modeCommand(state.mode));
});

function redraw(): void {
  statusEl.textContent = state.status;
  statusEl.className = `status ${state.status}`;
  if (state.lastError) errorEl.textContent = `server: ${state.lastError}`;

  const frame = state.latest;
  if (frame) {
    const [vx, vy] = frame.theta.v;
    thetaEl.textContent =
      `t=${(frame.t_ms / 1000).toFixed(2)}s  a=${frame.theta.a.toFixed(2)}  ` +
      `b=${frame.theta.b.toFixed(2)}  v=(${vx.toFixed(2)}, ${vy.toFixed(2)})  ` +
      `eye=${frame.eye}  source=${frame.theta.source ?? 'decoded'}`;
    const posterior = state.posterior();
    barAgg.style.width = `${100 * (posterior[0] ?? 0)}%`;
    barDisp.style.width = `${100 * (posterior[1] ?? 0)}%`;
  }
  tickerEl.textContent = state.eyeTicker
    .slice(-8)
    .map((e) => `${(e.t_ms / 1000).toFixed(1)}s ${e.eye} (${e.source})`)
    .join('\n');

  drawScene(ctx, state, { width: canvas.width, height: canvas.height });
  requestAnimationFrame(redraw);
}

requestAnimationFrame(redraw);
