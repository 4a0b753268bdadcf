import { createApp } from "./app.js";
import type { AppConfig } from "./app.js";

declare global {
  interface Window {
    __EHRSUM_CONFIG__?: AppConfig;
  }
}

const root = document.getElementById("app");
if (root) {
  createApp(window, root, window.__EHRSUM_CONFIG__ ?? {});
}
