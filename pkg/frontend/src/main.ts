import { ConsoleApp } from "./app";

const params = new URLSearchParams(window.location.search);
const server =
  params.get("server") ?? `ws://${window.location.hostname || "127.0.0.1"}:8766`;

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = new ConsoleApp(root, (url) => new WebSocket(url));
app.connect(server);

function frame() {
  app.render();
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
