/**
 * Entry point: wires URL params, the string table, the sync client, the
 * three.js renderer, and the DOM panels together.
 *
 * URL parameters:
 *   ?server=host:port  session server (default: the page's own host)
 *   ?lang=ja           UI language (falls back to en for unknown codes)
 *   ?role=observer     join read-only
 */

import { ClientCore } from "./client.js";
import { ROLE_OBSERVER, ROLE_PARTICIPANT } from "./wire.js";
import { Connection, httpBase, resolveTarget } from "./net.js";
import { parseTable, StringTable } from "./i18n.js";
import { ViewModel, cameraOrientation, cameraPosition } from "./viewmodel.js";
import { SceneRenderer } from "./render.js";
import { UiPanels } from "./ui.js";

const POSE_PUBLISH_MS = 500;

async function fetchStrings(base: string): Promise<StringTable> {
  try {
    const resp = await fetch(`${base}/strings.tsv`);
    if (!resp.ok) throw new Error(`strings.tsv: ${resp.status}`);
    return parseTable(await resp.text());
  } catch {
    return parseTable(""); // english keys as last resort
  }
}

function buildLayout(): { header: HTMLElement; menu: HTMLElement; canvas: HTMLCanvasElement; side: HTMLElement } {
  const app = document.getElementById("app")!;
  const header = document.createElement("header");
  header.id = "statusbar";
  const main = document.createElement("main");
  const menu = document.createElement("aside");
  menu.id = "menu";
  const viewport = document.createElement("div");
  viewport.id = "viewport";
  const canvas = document.createElement("canvas");
  canvas.id = "scene";
  viewport.appendChild(canvas);
  const side = document.createElement("aside");
  side.id = "sidepanel";
  main.append(menu, viewport, side);
  app.append(header, main);
  return { header, menu, canvas, side };
}

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const target = resolveTarget(params, window.location);
  const base = httpBase(target);

  const table = await fetchStrings(base);
  const requestedLang = params.get("lang") ?? "en";
  const role = params.get("role") === ROLE_OBSERVER ? ROLE_OBSERVER : ROLE_PARTICIPANT;

  const core = new ClientCore({ role, language: requestedLang });
  const vm = new ViewModel(core, table, requestedLang);

  const conn = new Connection(target, core, () => {
    vm.notify();
    void vm.ensureDataset(base);
  });
  vm.conn = conn;

  const { header, menu, canvas, side } = buildLayout();
  new UiPanels(vm, header, menu, side);
  const renderer = new SceneRenderer(canvas, vm);

  // Presence: publish the camera as this user's pose while it moves.
  let cameraDirty = true;
  renderer.onCameraMoved = () => {
    cameraDirty = true;
  };
  setInterval(() => {
    if (!cameraDirty || !vm.canEdit || core.clientId === null) return;
    cameraDirty = false;
    try {
      conn.submit({
        type: "set_user_pose",
        client_id: core.clientId,
        pose: { position: cameraPosition(vm.camera), orientation: cameraOrientation(vm.camera) },
      });
    } catch {
      // not synced yet; retry on the next tick
      cameraDirty = true;
    }
  }, POSE_PUBLISH_MS);

  window.addEventListener("beforeunload", () => conn.stop());
  conn.start();
}

void start();
