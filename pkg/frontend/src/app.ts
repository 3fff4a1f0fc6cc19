/**
 * Browser entry point: wires the store, the socket and the renderers to
 * the page. Everything interesting lives in the imported modules; this
 * file only touches the DOM.
 */

import { ConsoleConnection, type Toast, type WireSocket } from "./connection.js";
import { renderBanners, renderControls, renderStatusBar, renderTimeline, renderToast } from "./render.js";
import { TimelineStore } from "./timeline.js";

function adaptWebSocket(url: string): WireSocket {
  const native = new WebSocket(url);
  const adapted: WireSocket = {
    send: (text) => native.send(text),
    close: () => native.close(),
    onopen: null,
    onmessage: null,
    onclose: null,
  };
  native.onopen = () => adapted.onopen?.();
  native.onmessage = (event) => adapted.onmessage?.(String(event.data));
  native.onclose = () => adapted.onclose?.();
  return adapted;
}

// ?host=127.0.0.1:8420 points the console at an engine served elsewhere,
// for when this page comes from a plain static file server.
function socketUrl(sessionId: string): string {
  const host = new URLSearchParams(location.search).get("host") ?? location.host;
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${host}/sessions/${encodeURIComponent(sessionId)}/ws`;
}

function mount(): void {
  const root = document.getElementById("console");
  if (!root) return;
  const sessionId = new URLSearchParams(location.search).get("session");
  if (!sessionId) {
    root.innerHTML = `<div class="banner fault">open with ?session=&lt;id&gt; in the URL</div>`;
    return;
  }

  root.innerHTML = [
    `<div id="banners"></div>`,
    `<div id="statusbar"></div>`,
    `<div id="timeline"></div>`,
    `<div id="controls"></div>`,
    `<div id="toasts"></div>`,
  ].join("");
  const regions = {
    banners: document.getElementById("banners")!,
    statusbar: document.getElementById("statusbar")!,
    timeline: document.getElementById("timeline")!,
    controls: document.getElementById("controls")!,
    toasts: document.getElementById("toasts")!,
  };

  const store = new TimelineStore();
  const openPayloads = new Set<number>();

  const redraw = () => {
    // inspector toggles and a half-typed note must survive a redraw
    const draft = regions.controls.querySelector<HTMLTextAreaElement>("textarea")?.value ?? "";
    regions.banners.innerHTML = renderBanners(store, connection.state);
    regions.statusbar.innerHTML = renderStatusBar(store, connection.state);
    regions.timeline.innerHTML = renderTimeline(store, openPayloads);
    regions.controls.innerHTML = renderControls(store, connection.pending, connection.state);
    const textarea = regions.controls.querySelector<HTMLTextAreaElement>("textarea");
    if (textarea) textarea.value = draft;
  };

  const showToast = (toast: Toast) => {
    const holder = document.createElement("div");
    holder.innerHTML = renderToast(toast);
    const node = holder.firstElementChild!;
    regions.toasts.appendChild(node);
    setTimeout(() => node.remove(), 6000);
  };

  const connection = new ConsoleConnection(socketUrl(sessionId), store, adaptWebSocket, {
    onFrame: redraw,
    onConnection: redraw,
    onToast: showToast,
  });

  regions.timeline.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const button = target.closest<HTMLButtonElement>("button.rollback");
    if (button) {
      connection.rollback(Number(button.dataset["step"]));
      redraw();
    }
  });
  regions.timeline.addEventListener("toggle", (event) => {
    const details = event.target as HTMLDetailsElement;
    const item = details.closest<HTMLLIElement>("li.entry");
    if (!item || item.classList.contains("archived")) return;
    const index = Number(item.dataset["index"]);
    if (details.open) openPayloads.add(index);
    else openPayloads.delete(index);
  }, true);

  regions.controls.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const cmd = target.closest<HTMLButtonElement>("button[data-cmd]")?.dataset["cmd"];
    if (cmd === "resume") connection.resume();
    else if (cmd === "abort") connection.abort();
    else if (cmd === "switch") {
      const role = regions.controls.querySelector<HTMLSelectElement>("select[name=role]")?.value ?? "";
      connection.switchRole(role);
    } else {
      return;
    }
    redraw();
  });
  regions.controls.addEventListener("submit", (event) => {
    event.preventDefault();
    const textarea = regions.controls.querySelector<HTMLTextAreaElement>("textarea");
    const result = connection.guide(textarea?.value ?? "");
    if (result.sent && textarea) textarea.value = "";
    redraw();
  });

  connection.connect();
  redraw();
}

mount();
