import { App } from "./app.js";

const params = new URLSearchParams(window.location.search);
const api = params.get("api") ?? "http://127.0.0.1:8000";
const actor = params.get("actor");

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = new App(api, root, actor);
void app.start();
