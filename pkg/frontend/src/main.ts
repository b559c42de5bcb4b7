/**
 * main.ts — bootstrap: load config, wire client/store/view-model, start the app.
 */

import { SoapClient } from "./api.js";
import { AppStore } from "./store.js";
import { ViewModel } from "./viewmodel.js";
import { App } from "./views.js";

interface AppConfig {
  endpointBaseUrl: string;
}

async function loadConfig(): Promise<AppConfig> {
  const response = await fetch("config.json");
  if (!response.ok) {
    throw new Error(`config.json: HTTP ${response.status}`);
  }
  return (await response.json()) as AppConfig;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app element");
  }
  const config = await loadConfig();
  const client = new SoapClient(config.endpointBaseUrl);
  const store = new AppStore(window.localStorage);
  const app = new App(root, client, store, new ViewModel(store));
  app.start();
}

void boot();
