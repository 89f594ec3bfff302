import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";

const params = new URLSearchParams(window.location.search);

mountApp(document, {
  api: new ApiClient(""),
  storage: window.sessionStorage,
  initialSessionId: params.get("session") ?? "",
});
